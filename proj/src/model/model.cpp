#include "mentor/model/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "mentor/common/error.hpp"
#include "mentor/common/rng.hpp"

namespace mentor {

void ModelConfig::validate() const {
  if (vocab_size < 1 || context_length < 1 || num_layers < 1 || hidden_dim < 1 ||
      num_heads < 1) {
    throw ConfigError("model dimensions must all be >= 1");
  }
  if (hidden_dim % num_heads != 0) {
    throw ConfigError("hidden_dim " + std::to_string(hidden_dim) +
                      " is not divisible by num_heads " + std::to_string(num_heads));
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},   {"context_length", c.context_length},
                     {"num_layers", c.num_layers},   {"hidden_dim", c.hidden_dim},
                     {"num_heads", c.num_heads},     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.vocab_size = j.at("vocab_size").get<int>();
  c.context_length = j.at("context_length").get<int>();
  c.num_layers = j.at("num_layers").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

Digest config_hash(const ModelConfig& config) {
  // nlohmann::json objects are key-sorted, which makes dump() canonical.
  return sha256(nlohmann::json(config).dump());
}

Precision parse_precision(const std::string& name) {
  if (name == "f64") return Precision::f64;
  if (name == "f32") return Precision::f32;
  throw ConfigError("precision must be f64 or f32, got " + name);
}

std::string to_string(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

ParameterLayout::ParameterLayout(const ModelConfig& c) {
  c.validate();
  const auto V = static_cast<std::size_t>(c.vocab_size);
  const auto C = static_cast<std::size_t>(c.context_length);
  const auto D = static_cast<std::size_t>(c.hidden_dim);
  const auto M = static_cast<std::size_t>(c.mlp_dim());
  wte = add("wte", {V, D}, false);
  wpe = add("wpe", {C, D}, false);
  for (int l = 0; l < c.num_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    LayerOffsets o{};
    o.ln1_g = add(p + "ln1.g", {D}, false);
    o.ln1_b = add(p + "ln1.b", {D}, false);
    o.qkv_w = add(p + "attn.qkv.w", {D, 3 * D}, true);
    o.qkv_b = add(p + "attn.qkv.b", {3 * D}, false);
    o.attn_proj_w = add(p + "attn.proj.w", {D, D}, true);
    o.attn_proj_b = add(p + "attn.proj.b", {D}, false);
    o.ln2_g = add(p + "ln2.g", {D}, false);
    o.ln2_b = add(p + "ln2.b", {D}, false);
    o.fc_w = add(p + "mlp.fc.w", {D, M}, true);
    o.fc_b = add(p + "mlp.fc.b", {M}, false);
    o.mlp_proj_w = add(p + "mlp.proj.w", {M, D}, true);
    o.mlp_proj_b = add(p + "mlp.proj.b", {D}, false);
    layers.push_back(o);
  }
  lnf_g = add("lnf.g", {D}, false);
  lnf_b = add("lnf.b", {D}, false);
  head_w = add("head.w", {D, V}, true);
  head_b = add("head.b", {V}, false);
}

std::size_t ParameterLayout::add(const std::string& name, std::vector<std::size_t> shape,
                                 bool decay) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  tensors_.push_back(TensorInfo{name, std::move(shape), total_, n, decay});
  const std::size_t offset = total_;
  total_ += n;
  return offset;
}

const TensorInfo& ParameterLayout::find(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw LookupError("no parameter tensor named " + name);
}

std::span<double> ModelState::tensor(const std::string& name) {
  const auto& t = layout.find(name);
  return std::span<double>(values).subspan(t.offset, t.size);
}

std::span<const double> ModelState::tensor(const std::string& name) const {
  const auto& t = layout.find(name);
  return std::span<const double>(values).subspan(t.offset, t.size);
}

std::span<const double> Gradients::tensor(const std::string& name) const {
  const auto& t = layout.find(name);
  return std::span<const double>(values).subspan(t.offset, t.size);
}

ModelState init_model(const ModelConfig& config) {
  ModelState m;
  m.config = config;
  m.layout = ParameterLayout(config);
  m.values.assign(m.layout.total(), 0.0);
  Rng rng(derive_seed(config.seed, hash_string("init")));
  const double std_dev = 0.02;
  const double proj_std = 0.02 / std::sqrt(2.0 * config.num_layers);
  for (const auto& t : m.layout.tensors()) {
    auto v = std::span<double>(m.values).subspan(t.offset, t.size);
    const bool gain = t.name.ends_with(".g");
    const bool matrix = t.shape.size() == 2;
    if (gain) {
      for (auto& x : v) x = 1.0;
    } else if (matrix) {
      const double s = t.name.ends_with("proj.w") ? proj_std : std_dev;
      for (auto& x : v) x = s * rng.normal();
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'R', 'D', 'S', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class U>
void put(std::string& out, U v) {
  static_assert(std::is_integral_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
}

void put_f64(std::string& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <class U>
  U get() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string save_checkpoint(const ModelState& model) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  const Digest h = config_hash(model.config);
  out.append(reinterpret_cast<const char*>(h.data()), h.size());
  const std::string cfg = nlohmann::json(model.config).dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  put<std::uint64_t>(out, model.step_count);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.layout.tensors().size()));
  for (const auto& t : model.layout.tensors()) {
    std::string rec;
    put<std::uint32_t>(rec, static_cast<std::uint32_t>(t.name.size()));
    rec += t.name;
    put<std::uint32_t>(rec, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(rec, d);
    for (std::size_t i = 0; i < t.size; ++i) put_f64(rec, model.values[t.offset + i]);
    put<std::uint64_t>(out, rec.size());
    out += rec;
  }
  return out;
}

ModelState load_checkpoint(std::string_view bytes, const std::optional<ModelConfig>& expected) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kMagic, 4)) throw CheckpointError("bad checkpoint magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Digest stored{};
  const auto hv = r.take(stored.size());
  std::memcpy(stored.data(), hv.data(), stored.size());
  const auto cfg_len = r.get<std::uint32_t>();
  ModelConfig config;
  try {
    config = nlohmann::json::parse(r.take(cfg_len)).get<ModelConfig>();
    config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("bad checkpoint config: ") + e.what());
  }
  if (config_hash(config) != stored) throw CheckpointError("checkpoint config hash is corrupt");
  if (expected && config_hash(*expected) != stored) {
    throw CheckpointError("checkpoint config hash " + to_hex(stored) +
                          " does not match expected " + to_hex(config_hash(*expected)));
  }
  ModelState m;
  m.config = config;
  m.layout = ParameterLayout(config);
  m.values.assign(m.layout.total(), 0.0);
  m.step_count = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  if (count != m.layout.tensors().size()) throw CheckpointError("checkpoint tensor count mismatch");
  for (const auto& t : m.layout.tensors()) {
    const auto rec_len = r.get<std::uint64_t>();
    Reader rec(r.take(rec_len));
    const auto name_len = rec.get<std::uint32_t>();
    if (rec.take(name_len) != t.name) throw CheckpointError("unexpected tensor, wanted " + t.name);
    const auto rank = rec.get<std::uint32_t>();
    if (rank != t.shape.size()) throw CheckpointError("rank mismatch for " + t.name);
    for (auto d : t.shape) {
      if (rec.get<std::uint64_t>() != d) throw CheckpointError("shape mismatch for " + t.name);
    }
    for (std::size_t i = 0; i < t.size; ++i) {
      const double v = rec.get_f64();
      if (!std::isfinite(v)) throw CheckpointError("non-finite value in " + t.name);
      m.values[t.offset + i] = v;
    }
    if (rec.remaining() != 0) throw CheckpointError("trailing bytes in record " + t.name);
  }
  if (r.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint");
  return m;
}

std::string checkpoint_digest(const ModelState& model) {
  return to_hex(sha256(save_checkpoint(model)));
}

}  // namespace mentor
