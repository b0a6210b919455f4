#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentor/common/digest.hpp"

namespace mentor {

struct ModelConfig {
  int vocab_size = 0;
  int context_length = 128;
  int num_layers = 2;
  int hidden_dim = 64;
  int num_heads = 4;
  std::uint64_t seed = 42;

  int head_dim() const { return hidden_dim / num_heads; }
  int mlp_dim() const { return 4 * hidden_dim; }
  // Throws ConfigError on a violated dimension constraint.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Hash over the canonical JSON form; stored in checkpoints.
Digest config_hash(const ModelConfig& config);

enum class Precision { f64, f32 };

Precision parse_precision(const std::string& name);
std::string to_string(Precision p);

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool decay = false;  // matrices decay; biases, gains and embeddings' peers do not
};

struct LayerOffsets {
  std::size_t ln1_g, ln1_b, qkv_w, qkv_b, attn_proj_w, attn_proj_b;
  std::size_t ln2_g, ln2_b, fc_w, fc_b, mlp_proj_w, mlp_proj_b;
};

// Canonical order of every parameter tensor inside one flat buffer.
class ParameterLayout {
 public:
  ParameterLayout() = default;
  explicit ParameterLayout(const ModelConfig& config);

  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  std::size_t total() const { return total_; }
  const TensorInfo& find(const std::string& name) const;

  std::size_t wte = 0, wpe = 0, lnf_g = 0, lnf_b = 0, head_w = 0, head_b = 0;
  std::vector<LayerOffsets> layers;

 private:
  std::size_t add(const std::string& name, std::vector<std::size_t> shape, bool decay);

  std::vector<TensorInfo> tensors_;
  std::size_t total_ = 0;
};

struct ModelState {
  ModelConfig config;
  ParameterLayout layout;
  std::vector<double> values;
  std::uint64_t step_count = 0;

  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;
};

ModelState init_model(const ModelConfig& config);

// Named view over a flat gradient buffer that shares the model's layout.
struct Gradients {
  ParameterLayout layout;
  std::vector<double> values;

  std::span<const double> tensor(const std::string& name) const;
};

// Checkpoint wire format (little-endian):
//   "RDST" | u32 version | 32-byte config hash | u32 len + config JSON |
//   u64 step_count | u32 record count | records
//   record: u64 byte length | u32 name len + name | u32 rank + u64 dims |
//           f64 values
std::string save_checkpoint(const ModelState& model);
// Throws CheckpointError on bad magic, version, truncation, or a config hash
// that differs from `expected` when one is given.
ModelState load_checkpoint(std::string_view bytes,
                           const std::optional<ModelConfig>& expected = std::nullopt);

// Digest over the serialized checkpoint; used to compare runs.
std::string checkpoint_digest(const ModelState& model);

}  // namespace mentor
