#ifndef COVO_CHECKPOINT_HPP_
#define COVO_CHECKPOINT_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "covo/model.hpp"

namespace covo {

// On-disk layout of a checkpoint directory:
//   manifest.txt  header, architecture, step, then one line per tensor:
//                 "tensor <name> <rows>x<cols> <byte offset> <dtype>"
//   params.bin    flat little-endian blob
//   vocab.txt     one token per line (see Vocabulary::save)
struct CheckpointManifest {
  struct Entry {
    std::string name;
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::int64_t byte_offset = 0;
    std::string dtype;
  };

  ModelConfig config;
  std::uint64_t step = 0;
  std::vector<Entry> tensors;
};

void write_manifest(const std::filesystem::path& path, const CheckpointManifest& m);
CheckpointManifest read_manifest(const std::filesystem::path& path);

void write_blob(const std::filesystem::path& path, const std::vector<double>& values,
                const std::string& dtype);
// Reads `count` values of `dtype` at `byte_offset`; throws FormatError naming
// `tensor` when the blob is too short.
std::vector<double> read_tensor(const std::filesystem::path& path, const std::string& tensor,
                                std::int64_t byte_offset, std::int64_t count,
                                const std::string& dtype);

template <typename Scalar>
constexpr const char* dtype_name() {
  return sizeof(Scalar) == 4 ? "f32" : "f64";
}

template <typename Scalar>
void save_checkpoint(const PolicySnapshot<Scalar>& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CheckpointManifest m;
  m.config = model.config();
  m.step = model.step();
  const std::int64_t width = sizeof(Scalar);
  for (const auto& t : model.layout().tensors()) {
    m.tensors.push_back({t.name, t.rows, t.cols, t.offset * width, dtype_name<Scalar>()});
  }
  const auto& p = model.parameters();
  write_blob(dir / "params.bin", std::vector<double>(p.data(), p.data() + p.size()),
             dtype_name<Scalar>());
  model.vocabulary().save(dir / "vocab.txt");
  write_manifest(dir / "manifest.txt", m);
}

// Loads every tensor named by the architecture. No partial model is ever
// returned: a missing or truncated tensor throws FormatError.
template <typename Scalar>
PolicySnapshot<Scalar> load_checkpoint(const std::filesystem::path& dir) {
  const CheckpointManifest m = read_manifest(dir / "manifest.txt");
  auto vocab = std::make_shared<const Vocabulary>(Vocabulary::load(dir / "vocab.txt"));
  const ParameterLayout layout(m.config);
  VectorX<Scalar> params(layout.total_size());
  for (const auto& t : layout.tensors()) {
    const CheckpointManifest::Entry* e = nullptr;
    for (const auto& cand : m.tensors) {
      if (cand.name == t.name) e = &cand;
    }
    if (!e) throw FormatError("checkpoint manifest is missing tensor " + t.name);
    if (e->rows != t.rows || e->cols != t.cols) {
      throw FormatError("checkpoint tensor " + t.name + " has the wrong shape");
    }
    const auto values = read_tensor(dir / "params.bin", t.name, e->byte_offset, t.size(), e->dtype);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      params[t.offset + i] = static_cast<Scalar>(values[static_cast<std::size_t>(i)]);
    }
  }
  return PolicySnapshot<Scalar>(std::move(vocab), m.config, std::move(params), m.step);
}

}  // namespace covo

#endif  // COVO_CHECKPOINT_HPP_
