#include "covo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "covo/error.hpp"

namespace covo {
namespace {

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

std::size_t dtype_width(const std::string& dtype) {
  if (dtype == "f32") return 4;
  if (dtype == "f64") return 8;
  throw FormatError("unsupported checkpoint dtype " + dtype);
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const CheckpointManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint manifest " + path.string());
  const auto& c = m.config;
  out << "covo-checkpoint 1\n"
      << "step " << m.step << "\n"
      << "vocab_size " << c.vocab_size << "\n"
      << "d_model " << c.d_model << "\n"
      << "n_layers " << c.n_layers << "\n"
      << "n_heads " << c.n_heads << "\n"
      << "context " << c.context << "\n"
      << "d_ff " << c.ff_width() << "\n";
  for (const auto& t : m.tensors) {
    out << "tensor " << t.name << " " << t.rows << "x" << t.cols << " " << t.byte_offset << " "
        << t.dtype << "\n";
  }
  if (!out) throw Error("failed writing checkpoint manifest " + path.string());
}

CheckpointManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing checkpoint manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "covo-checkpoint 1") {
    throw FormatError("unrecognized checkpoint manifest header in " + path.string());
  }
  CheckpointManifest m;
  bool have[7] = {};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    auto read_size = [&](std::size_t& dst, int slot) {
      if (!(ls >> dst)) throw FormatError("bad manifest line: " + line);
      have[slot] = true;
    };
    if (key == "step") {
      if (!(ls >> m.step)) throw FormatError("bad manifest line: " + line);
      have[0] = true;
    } else if (key == "vocab_size") {
      read_size(m.config.vocab_size, 1);
    } else if (key == "d_model") {
      read_size(m.config.d_model, 2);
    } else if (key == "n_layers") {
      read_size(m.config.n_layers, 3);
    } else if (key == "n_heads") {
      read_size(m.config.n_heads, 4);
    } else if (key == "context") {
      read_size(m.config.context, 5);
    } else if (key == "d_ff") {
      read_size(m.config.d_ff, 6);
    } else if (key == "tensor") {
      CheckpointManifest::Entry e;
      std::string shape;
      if (!(ls >> e.name >> shape >> e.byte_offset >> e.dtype)) {
        throw FormatError("bad manifest tensor line: " + line);
      }
      const auto x = shape.find('x');
      if (x == std::string::npos) throw FormatError("bad tensor shape for " + e.name);
      e.rows = std::stoll(shape.substr(0, x));
      e.cols = std::stoll(shape.substr(x + 1));
      m.tensors.push_back(std::move(e));
    } else {
      throw FormatError("unknown manifest key " + key);
    }
  }
  for (bool h : have) {
    if (!h) throw FormatError("checkpoint manifest is missing architecture fields");
  }
  return m;
}

void write_blob(const std::filesystem::path& path, const std::vector<double>& values,
                const std::string& dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::size_t w = dtype_width(dtype);
  for (double v : values) {
    if (w == 4) {
      const float f = to_little_endian(static_cast<float>(v));
      out.write(reinterpret_cast<const char*>(&f), 4);
    } else {
      const double d = to_little_endian(v);
      out.write(reinterpret_cast<const char*>(&d), 8);
    }
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<double> read_tensor(const std::filesystem::path& path, const std::string& tensor,
                                std::int64_t byte_offset, std::int64_t count,
                                const std::string& dtype) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing tensor file " + path.string());
  const std::size_t w = dtype_width(dtype);
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::int64_t>(in.tellg());
  if (byte_offset < 0 || byte_offset + count * static_cast<std::int64_t>(w) > size) {
    throw FormatError("tensor file is truncated: cannot read tensor " + tensor);
  }
  in.seekg(byte_offset);
  std::vector<double> out(static_cast<std::size_t>(count));
  for (auto& v : out) {
    if (w == 4) {
      float f;
      in.read(reinterpret_cast<char*>(&f), 4);
      v = to_little_endian(f);
    } else {
      double d;
      in.read(reinterpret_cast<char*>(&d), 8);
      v = to_little_endian(d);
    }
  }
  if (!in) throw FormatError("failed reading tensor " + tensor);
  return out;
}

}  // namespace covo
