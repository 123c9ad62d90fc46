#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vxs/field/grid.hpp"
#include "vxs/pipeline/config.hpp"
#include "vxs/pipeline/optimizer.hpp"
#include "vxs/style/perspective.hpp"

namespace vxs {

inline void to_json(nlohmann::json& j, const GridSpec& s) {
  j = {{"resolution", s.resolution},
       {"bounds_min", s.bounds_min},
       {"bounds_max", s.bounds_max},
       {"channels", s.channels}};
}

inline void from_json(const nlohmann::json& j, GridSpec& s) {
  s.resolution = j.at("resolution");
  s.bounds_min = j.at("bounds_min");
  s.bounds_max = j.at("bounds_max");
  s.channels = j.at("channels");
}

/// Complete training snapshot. Grid parameters, optimizer moments and the
/// RNG state round-trip bit-exactly, so a resumed run replays the
/// uninterrupted one.
struct Checkpoint {
  std::string stage = "pretrained";  // pretrained | stylizing | stylized
  int64_t iteration = 0;
  TrainConfig config;
  RadianceField field;
  std::string rng_state;
  std::vector<std::pair<std::string, GridOptimizer>> optimizers;
  std::optional<BinLayout> bin_layout;
  std::vector<Tensor> content_targets;  // [H,W,3] pretrained renders (stylizing stage)
};

namespace detail {

constexpr char kCkptMagic[4] = {'V', 'X', 'C', 'K'};
constexpr uint32_t kCkptVersion = 1;

inline void write_f32(std::ofstream& f, const std::vector<float>& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline void read_f32(std::ifstream& f, std::vector<float>& v, const std::string& what) {
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(v.size() * sizeof(float)));
  VXS_CHECK(f.good(), FormatError, "checkpoint payload truncated at " + what);
}

inline nlohmann::json grid_header(const std::string& name, const VoxelGrid& g) {
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto* a : g.param_arrays()) arrays.push_back(a->size());
  return {{"name", name},
          {"spec", g.spec},
          {"storage", g.storage == GridStorage::dense ? "dense" : "vm"},
          {"rank", g.rank},
          {"arrays", arrays}};
}

inline VoxelGrid grid_from_header(const nlohmann::json& j) {
  GridSpec spec = j.at("spec");
  std::string storage = j.at("storage");
  VoxelGrid g = storage == "dense" ? VoxelGrid::make_dense(spec)
                                   : VoxelGrid::make_vm(spec, j.at("rank").get<int>());
  auto arrays = g.param_arrays();
  const auto& sizes = j.at("arrays");
  VXS_CHECK(sizes.size() == arrays.size(), FormatError, "checkpoint grid array count mismatch");
  for (size_t i = 0; i < arrays.size(); ++i)
    VXS_CHECK(sizes[i].get<size_t>() == arrays[i]->size(), FormatError,
              "checkpoint grid array size mismatch");
  return g;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json header;
  header["stage"] = ckpt.stage;
  header["iteration"] = ckpt.iteration;
  header["config"] = ckpt.config;
  header["background"] = ckpt.field.background;
  header["rng"] = ckpt.rng_state;
  header["grids"] = {detail::grid_header("density", ckpt.field.density),
                     detail::grid_header("color", ckpt.field.color),
                     detail::grid_header("deformation", ckpt.field.deformation)};
  nlohmann::json opts = nlohmann::json::array();
  for (const auto& [name, opt] : ckpt.optimizers) {
    nlohmann::json arrays = nlohmann::json::array();
    int64_t step = 0;
    for (const auto& st : opt.states) {
      arrays.push_back(st.m.size());
      step = st.step;
    }
    opts.push_back({{"name", name}, {"step", step}, {"arrays", arrays}});
  }
  header["optimizers"] = opts;
  if (ckpt.bin_layout) header["bin_layout"] = *ckpt.bin_layout;
  if (!ckpt.content_targets.empty()) {
    header["content_targets"] = {{"count", ckpt.content_targets.size()},
                                 {"height", ckpt.content_targets[0].dim(0)},
                                 {"width", ckpt.content_targets[0].dim(1)}};
  }

  std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary);
  VXS_CHECK(f.good(), IoError, "cannot open checkpoint for write: " + path);
  f.write(detail::kCkptMagic, 4);
  uint32_t version = detail::kCkptVersion;
  f.write(reinterpret_cast<const char*>(&version), 4);
  uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  for (const VoxelGrid* g : {&ckpt.field.density, &ckpt.field.color, &ckpt.field.deformation})
    for (const auto* a : g->param_arrays()) detail::write_f32(f, *a);
  for (const auto& [name, opt] : ckpt.optimizers)
    for (const auto& st : opt.states) {
      detail::write_f32(f, st.m);
      detail::write_f32(f, st.v);
    }
  for (const auto& t : ckpt.content_targets) {
    std::vector<float> buf(t.data.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.data[i]);
    detail::write_f32(f, buf);
  }
  VXS_CHECK(f.good(), IoError, "checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  VXS_CHECK(f.good(), IoError, "cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  VXS_CHECK(f.good() && std::memcmp(magic, detail::kCkptMagic, 4) == 0, FormatError,
            "bad checkpoint magic in " + path);
  uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  VXS_CHECK(version == detail::kCkptVersion, FormatError,
            "unsupported checkpoint version " + std::to_string(version));
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), 8);
  VXS_CHECK(f.good() && hlen > 0 && hlen < (1ULL << 30), FormatError,
            "corrupt checkpoint header length");
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  VXS_CHECK(f.good(), FormatError, "truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.stage = header.at("stage");
    ckpt.iteration = header.at("iteration");
    ckpt.config = header.at("config").get<TrainConfig>();
    ckpt.field.background = header.at("background");
    ckpt.rng_state = header.value("rng", "");
    const auto& grids = header.at("grids");
    VXS_CHECK(grids.size() == 3, FormatError, "checkpoint must contain three grids");
    ckpt.field.density = detail::grid_from_header(grids[0]);
    ckpt.field.color = detail::grid_from_header(grids[1]);
    ckpt.field.deformation = detail::grid_from_header(grids[2]);
    if (header.contains("bin_layout")) ckpt.bin_layout = header.at("bin_layout").get<BinLayout>();

    for (VoxelGrid* g : {&ckpt.field.density, &ckpt.field.color, &ckpt.field.deformation})
      for (auto* a : g->param_arrays()) detail::read_f32(f, *a, "grid payload");

    for (const auto& oj : header.at("optimizers")) {
      GridOptimizer opt;
      for (const auto& sz : oj.at("arrays")) {
        AdamState st;
        st.init(sz.get<size_t>());
        st.step = oj.at("step").get<int64_t>();
        detail::read_f32(f, st.m, "optimizer m");
        detail::read_f32(f, st.v, "optimizer v");
        opt.states.push_back(std::move(st));
      }
      ckpt.optimizers.emplace_back(oj.at("name").get<std::string>(), std::move(opt));
    }

    if (header.contains("content_targets")) {
      const auto& ct = header.at("content_targets");
      size_t count = ct.at("count");
      int h = ct.at("height"), w = ct.at("width");
      for (size_t i = 0; i < count; ++i) {
        std::vector<float> buf(static_cast<size_t>(h) * w * 3);
        detail::read_f32(f, buf, "content target");
        Tensor t({h, w, 3});
        for (size_t k = 0; k < buf.size(); ++k) t.data[k] = buf[k];
        ckpt.content_targets.push_back(std::move(t));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  ckpt.field.validate();
  return ckpt;
}

}  // namespace vxs
