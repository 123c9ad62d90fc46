#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "vxs/core/error.hpp"

namespace vxs {

/// Full training configuration. The JSON schema is exactly this structure;
/// unknown keys are rejected and overrides are type-checked against the
/// defaults (see apply_override / validate_config_keys).
struct TrainConfig {
  uint64_t seed = 42;

  struct Grid {
    std::array<int, 3> resolution{64, 64, 64};
    std::array<int, 3> deform_resolution{0, 0, 0};  // 0 -> follow resolution
    std::string mode = "dense";                     // dense | vm
    int rank = 8;
  } grid;

  struct Render {
    int n_samples = 96;
  } render;

  struct Pretrain {
    int iters = 3000;
    int batch_rays = 1024;
    double lr_density = 0.05;
    double lr_color = 0.05;
    double w_distortion = 1e-3;
    bool jitter = true;
  } pretrain;

  struct Stylize {
    int iters = 250;
    double lr_color = 0.02;
    double lr_deform = 0.002;
    double w_style = 1.0;
    double w_content = 0.08;
    double w_deform_smooth = 0.02;
    bool use_geometry_aware = true;
    bool use_patch = true;
    int patch_k = 2;
    int patch_r = 1;
    int patch_stride = 0;  // 0 -> disjoint
    double depth_term_weight = 1.0;
    int perspective_bins = 1;
    bool use_color_transfer = true;
    // Midpoint (deterministic) sampling by default: keeps replays and the
    // self-style fixed point exact. Set true for jittered stratified bins.
    bool jitter = false;
  } stylize;

  struct Features {
    std::string weights_path;  // empty -> deterministic fallback extractor
    uint64_t fallback_seed = 42;
    std::vector<std::string> taps{"block2", "block3"};
  } features;

  void validate() const {
    VXS_CHECK(grid.mode == "dense" || grid.mode == "vm", ConfigError,
              "grid.mode must be 'dense' or 'vm'");
    VXS_CHECK(grid.rank >= 1, ConfigError, "grid.rank must be >= 1");
    VXS_CHECK(render.n_samples >= 2, ConfigError, "render.n_samples must be >= 2");
    VXS_CHECK(pretrain.iters >= 0 && stylize.iters >= 0, ConfigError,
              "iteration counts must be >= 0");
    VXS_CHECK(pretrain.batch_rays >= 1, ConfigError, "pretrain.batch_rays must be >= 1");
    VXS_CHECK(pretrain.lr_density > 0 && pretrain.lr_color > 0 && stylize.lr_color > 0 &&
                  stylize.lr_deform > 0,
              ConfigError, "learning rates must be positive");
    VXS_CHECK(stylize.patch_k >= 1 && stylize.patch_r >= 1, ConfigError,
              "patch k and r must be >= 1");
    VXS_CHECK(stylize.perspective_bins >= 1, ConfigError, "perspective_bins must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"seed", c.seed},
       {"grid",
        {{"resolution", c.grid.resolution},
         {"deform_resolution", c.grid.deform_resolution},
         {"mode", c.grid.mode},
         {"rank", c.grid.rank}}},
       {"render", {{"n_samples", c.render.n_samples}}},
       {"pretrain",
        {{"iters", c.pretrain.iters},
         {"batch_rays", c.pretrain.batch_rays},
         {"lr_density", c.pretrain.lr_density},
         {"lr_color", c.pretrain.lr_color},
         {"w_distortion", c.pretrain.w_distortion},
         {"jitter", c.pretrain.jitter}}},
       {"stylize",
        {{"iters", c.stylize.iters},
         {"lr_color", c.stylize.lr_color},
         {"lr_deform", c.stylize.lr_deform},
         {"w_style", c.stylize.w_style},
         {"w_content", c.stylize.w_content},
         {"w_deform_smooth", c.stylize.w_deform_smooth},
         {"use_geometry_aware", c.stylize.use_geometry_aware},
         {"use_patch", c.stylize.use_patch},
         {"patch_k", c.stylize.patch_k},
         {"patch_r", c.stylize.patch_r},
         {"patch_stride", c.stylize.patch_stride},
         {"depth_term_weight", c.stylize.depth_term_weight},
         {"perspective_bins", c.stylize.perspective_bins},
         {"use_color_transfer", c.stylize.use_color_transfer},
         {"jitter", c.stylize.jitter}}},
       {"features",
        {{"weights_path", c.features.weights_path},
         {"fallback_seed", c.features.fallback_seed},
         {"taps", c.features.taps}}}};
}

namespace detail {

/// Reject keys (recursively) that do not exist in the defaults, and values
/// whose JSON type differs from the default's.
inline void check_against_schema(const nlohmann::json& given, const nlohmann::json& schema,
                                 const std::string& prefix) {
  for (auto it = given.begin(); it != given.end(); ++it) {
    std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    VXS_CHECK(schema.contains(it.key()), ConfigError, "unknown config key: " + path);
    const auto& dflt = schema.at(it.key());
    const auto& val = it.value();
    if (dflt.is_object()) {
      VXS_CHECK(val.is_object(), ConfigError, "config key " + path + " must be an object");
      check_against_schema(val, dflt, path);
    } else if (dflt.is_boolean()) {
      VXS_CHECK(val.is_boolean(), ConfigError, "config key " + path + " must be a boolean");
    } else if (dflt.is_number()) {
      VXS_CHECK(val.is_number(), ConfigError, "config key " + path + " must be a number");
    } else if (dflt.is_string()) {
      VXS_CHECK(val.is_string(), ConfigError, "config key " + path + " must be a string");
    } else if (dflt.is_array()) {
      VXS_CHECK(val.is_array(), ConfigError, "config key " + path + " must be an array");
    }
  }
}

}  // namespace detail

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  nlohmann::json schema = TrainConfig{};
  detail::check_against_schema(j, schema, "");
  nlohmann::json merged = schema;
  merged.update(j, /*merge_objects=*/true);
  try {
    c.seed = merged.at("seed");
    const auto& g = merged.at("grid");
    c.grid.resolution = g.at("resolution");
    c.grid.deform_resolution = g.at("deform_resolution");
    c.grid.mode = g.at("mode");
    c.grid.rank = g.at("rank");
    c.render.n_samples = merged.at("render").at("n_samples");
    const auto& p = merged.at("pretrain");
    c.pretrain.iters = p.at("iters");
    c.pretrain.batch_rays = p.at("batch_rays");
    c.pretrain.lr_density = p.at("lr_density");
    c.pretrain.lr_color = p.at("lr_color");
    c.pretrain.w_distortion = p.at("w_distortion");
    c.pretrain.jitter = p.at("jitter");
    const auto& s = merged.at("stylize");
    c.stylize.iters = s.at("iters");
    c.stylize.lr_color = s.at("lr_color");
    c.stylize.lr_deform = s.at("lr_deform");
    c.stylize.w_style = s.at("w_style");
    c.stylize.w_content = s.at("w_content");
    c.stylize.w_deform_smooth = s.at("w_deform_smooth");
    c.stylize.use_geometry_aware = s.at("use_geometry_aware");
    c.stylize.use_patch = s.at("use_patch");
    c.stylize.patch_k = s.at("patch_k");
    c.stylize.patch_r = s.at("patch_r");
    c.stylize.patch_stride = s.at("patch_stride");
    c.stylize.depth_term_weight = s.at("depth_term_weight");
    c.stylize.perspective_bins = s.at("perspective_bins");
    c.stylize.use_color_transfer = s.at("use_color_transfer");
    c.stylize.jitter = s.at("jitter");
    const auto& f = merged.at("features");
    c.features.weights_path = f.at("weights_path");
    c.features.fallback_seed = f.at("fallback_seed");
    c.features.taps = f.at("taps").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
}

/// Apply one dotted-key override ("stylize.lr_color=0.01"). The key must
/// exist in the schema and the value must parse to the default's type.
inline void apply_override(nlohmann::json& cfg, const std::string& key,
                           const std::string& value) {
  nlohmann::json schema = TrainConfig{};
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t dot = key.find('.', start);
    if (dot == std::string::npos) {
      parts.push_back(key.substr(start));
      break;
    }
    parts.push_back(key.substr(start, dot - start));
    start = dot + 1;
  }
  const nlohmann::json* s = &schema;
  for (const auto& p : parts) {
    VXS_CHECK(s->is_object() && s->contains(p), ConfigError, "unknown config key: " + key);
    s = &s->at(p);
  }
  VXS_CHECK(!s->is_object(), ConfigError, "config key " + key + " is not a leaf value");

  nlohmann::json parsed;
  if (s->is_string()) {
    parsed = value;
  } else {
    parsed = nlohmann::json::parse(value, nullptr, false);
    VXS_CHECK(!parsed.is_discarded(), ConfigError,
              "cannot parse override value for " + key + ": " + value);
    if (s->is_boolean())
      VXS_CHECK(parsed.is_boolean(), ConfigError, "override " + key + " must be a boolean");
    else if (s->is_number())
      VXS_CHECK(parsed.is_number(), ConfigError, "override " + key + " must be a number");
    else if (s->is_array())
      VXS_CHECK(parsed.is_array(), ConfigError, "override " + key + " must be an array");
  }

  nlohmann::json* t = &cfg;
  for (size_t i = 0; i + 1 < parts.size(); ++i) t = &(*t)[parts[i]];
  (*t)[parts.back()] = parsed;
}

}  // namespace vxs
