#include "mentor/cli/config_file.hpp"

#include <toml.hpp>

#include "mentor/common/error.hpp"
#include "mentor/common/io.hpp"

namespace mentor {
namespace {

Json to_json_value(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    Json out = Json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = to_json_value(v);
    return out;
  }
  if (const auto* a = node.as_array()) {
    Json out = Json::array();
    for (const auto& v : *a) out.push_back(to_json_value(v));
    return out;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  throw ConfigError("unsupported TOML value type (dates and times are not used)");
}

fs::path resolve_path(const fs::path& base, const std::string& value) {
  if (value.empty()) return {};
  const fs::path p(value);
  if (p.is_absolute()) return p;
  if (fs::exists(base / p)) return fs::weakly_canonical(base / p);
  const fs::path source = fs::path(MENTOR_SOURCE_DIR) / p;
  if (fs::exists(source)) return fs::weakly_canonical(source);
  return fs::weakly_canonical(base / p);
}

}  // namespace

Json merge_config(const Json& defaults, const Json& overlay, const std::string& where) {
  if (!overlay.is_object()) throw ConfigError("expected a table at '" + where + "'");
  Json out = defaults;
  for (const auto& [key, value] : overlay.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!out.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    auto& slot = out[key];
    if (slot.is_object()) {
      slot = merge_config(slot, value, path);
    } else if (slot.is_null() || (slot.is_number() && value.is_number()) ||
               slot.type() == value.type()) {
      slot = value;
    } else {
      throw ConfigError("config key '" + path + "' has the wrong type");
    }
  }
  return out;
}

void apply_profile(ExperimentConfig& config, const std::string& profile) {
  const OptimizerConfig p = OptimizerConfig::profile(profile);
  config.profile = profile;
  config.optimizer.learning_rate = p.learning_rate;
  config.optimizer.later_round_lr = p.later_round_lr;
}

ExperimentConfig load_config_file(const fs::path& path) {
  toml::table table;
  try {
    table = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError(path.string() + ": " + std::string(e.description()));
  } catch (const std::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  const Json overlay = to_json_value(table);
  ExperimentConfig defaults;
  defaults.model.vocab_size = 0;
  if (overlay.contains("profile") && overlay["profile"].is_string()) {
    apply_profile(defaults, overlay["profile"].get<std::string>());
  }
  ExperimentConfig config = merge_config(Json(defaults), overlay).get<ExperimentConfig>();

  const fs::path base = fs::absolute(path).parent_path();
  for (std::string* p : {&config.data.train_path, &config.data.test_path, &config.data.bank_path,
                         &config.demos.fixture, &config.teacher.prompt_fixture,
                         &config.teacher.cache_dir}) {
    *p = resolve_path(base, *p).string();
  }
  config.validate();
  return config;
}

}  // namespace mentor
