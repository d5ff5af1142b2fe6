/* Copyright 2026 The SceneForge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "sf/config.h"

#include <fstream>
#include <set>

#include "sf/error.h"

namespace sf {

using nlohmann::json;

namespace {

// Key-tracking view of one JSON object. finish() rejects keys nobody asked
// for, so a typo in a config file is an error rather than a silent default.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  std::string key(const std::string& k) const {
    return path_.empty() ? k : path_ + "." + k;
  }

  const json* raw(const std::string& k) {
    seen_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& k, int& out) {
    if (const json* v = raw(k)) {
      if (!v->is_number_integer()) throw ConfigError(key(k) + ": expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& k, std::uint64_t& out) {
    if (const json* v = raw(k)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0)
        throw ConfigError(key(k) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& k, double& out) {
    if (const json* v = raw(k)) {
      if (!v->is_number()) throw ConfigError(key(k) + ": expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& k, bool& out) {
    if (const json* v = raw(k)) {
      if (!v->is_boolean()) throw ConfigError(key(k) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& k, std::string& out) {
    if (const json* v = raw(k)) {
      if (!v->is_string()) throw ConfigError(key(k) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& k, Vec3& out) {
    if (const json* v = raw(k)) out = vec3(*v, key(k));
  }
  void get(const std::string& k, std::optional<double>& out) {
    if (const json* v = raw(k)) {
      if (v->is_null()) {
        out.reset();
      } else if (v->is_number()) {
        out = v->get<double>();
      } else {
        throw ConfigError(key(k) + ": expected a number or null");
      }
    }
  }
  // Enumerations stored as names.
  template <typename T, typename Parse>
  void get_enum(const std::string& k, T& out, Parse parse) {
    std::string name;
    get(k, name);
    if (!raw(k)) return;
    try {
      out = parse(name);
    } catch (const ConfigError& e) {
      throw ConfigError(key(k) + ": " + e.what());
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) {
        throw ConfigError(key(it.key()) + ": unknown key");
      }
    }
  }

  static Vec3 vec3(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3)
      throw ConfigError(where + ": expected an array of 3 numbers");
    Vec3 out{};
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number())
        throw ConfigError(where + ": expected an array of 3 numbers");
      out[i] = v[i].get<double>();
    }
    return out;
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const json& array_at(const json* v, const std::string& where) {
  if (!v->is_array()) throw ConfigError(where + ": expected an array");
  return *v;
}

std::vector<double> number_list(const json* v, const std::string& where) {
  std::vector<double> out;
  for (const json& e : array_at(v, where)) {
    if (!e.is_number()) throw ConfigError(where + ": expected numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

void read_bev(const json& j, PipelineConfig& c) {
  Obj o(j, "bev");
  o.get("extent_m", c.grid.extent_m);
  o.get("cells", c.grid.cells);
  o.get("classes", c.grid.classes);
  if (const json* boxes = o.raw("boxes")) {
    c.boxes.clear();
    const json& arr = array_at(boxes, "bev.boxes");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Obj b(arr[i], "bev.boxes[" + std::to_string(i) + "]");
      BevBox box;
      std::vector<double> center{box.center_x, box.center_y},
          size{box.width, box.length};
      if (const json* v = b.raw("center")) center = number_list(v, b.key("center"));
      if (const json* v = b.raw("size")) size = number_list(v, b.key("size"));
      if (center.size() != 2) throw ConfigError(b.key("center") + ": expected [x, y]");
      if (size.size() != 2) throw ConfigError(b.key("size") + ": expected [width, length]");
      box.center_x = center[0];
      box.center_y = center[1];
      box.width = size[0];
      box.length = size[1];
      b.get("yaw", box.yaw);
      b.get("class_id", box.class_id);
      b.finish();
      c.boxes.push_back(box);
    }
  }
  o.finish();
}

void read_dit(const json& j, DiTConfig& d) {
  Obj o(j, "dit");
  o.get("views", d.num_views);
  o.get("frames", d.frames);
  o.get("latent_height", d.latent_height);
  o.get("latent_width", d.latent_width);
  o.get("channels", d.channels);
  o.get("heads", d.heads);
  o.get("depth", d.depth);
  if (const json* v = o.raw("block_pattern")) {
    d.block_pattern.clear();
    for (const json& e : array_at(v, "dit.block_pattern")) {
      if (!e.is_string()) throw ConfigError("dit.block_pattern: expected names");
      try {
        d.block_pattern.push_back(parse_block_kind(e.get<std::string>()));
      } catch (const ConfigError& err) {
        throw ConfigError(std::string("dit.block_pattern: ") + err.what());
      }
    }
  }
  o.get("steps", d.steps);
  o.get("guidance", d.guidance_weight);
  o.get("mlp_ratio", d.mlp_ratio);
  o.get("decoder_upsample", d.decoder_upsample);
  o.finish();
}

void read_cache(const json& j, CacheConfig& c) {
  Obj o(j, "cache");
  o.get_enum("branch_mode", c.branch_mode, parse_branch_mode);
  o.get("threshold", c.threshold);
  o.get("degree", c.degree);
  if (const json* v = o.raw("rescale")) {
    if (v->is_null()) {
      c.rescale.reset();
    } else {
      c.rescale = Polynomial{number_list(v, "cache.rescale")};
    }
  }
  if (const json* v = o.raw("force_compute_steps")) {
    c.force_compute_steps.clear();
    for (const json& e : array_at(v, "cache.force_compute_steps")) {
      if (!e.is_number_integer())
        throw ConfigError("cache.force_compute_steps: expected integers");
      c.force_compute_steps.insert(e.get<int>());
    }
  }
  o.finish();
}

void read_quant(const json& j, std::map<BlockKind, QuantScheme>& out) {
  if (!j.is_object()) throw ConfigError("quant: expected an object");
  out.clear();
  for (auto it = j.begin(); it != j.end(); ++it) {
    BlockKind kind;
    try {
      kind = parse_block_kind(it.key());
    } catch (const ConfigError&) {
      throw ConfigError("quant." + it.key() + ": unknown block kind");
    }
    Obj o(it.value(), "quant." + it.key());
    QuantScheme s;
    o.get_enum("q_format", s.q_format, parse_int_format);
    o.get_enum("k_format", s.k_format, parse_int_format);
    o.get_enum("p_format", s.p_format, parse_float_format);
    o.get_enum("v_format", s.v_format, parse_float_format);
    o.get("k_smoothing", s.k_smoothing);
    std::uint64_t bs = s.block_size;
    o.get("block_size", bs);
    s.block_size = static_cast<std::size_t>(bs);
    o.finish();
    out[kind] = s;
  }
}

void read_recon(const json& j, ReconConfig& r) {
  Obj o(j, "recon");
  o.get("delta", r.delta);
  o.get("per_pixel_stride", r.per_pixel_stride);
  o.get("base_alpha", r.base_alpha);
  o.get("scale_factor", r.scale_factor);
  o.get("neighbor_weight", r.neighbor_weight);
  o.finish();
}

void read_scene(const json& j, SceneSpec& s) {
  Obj o(j, "scene");
  o.get("ground_y", s.ground_y);
  o.get("wall_z", s.wall_z);
  o.get("background", s.background);
  if (const json* v = o.raw("spheres")) {
    s.spheres.clear();
    const json& arr = array_at(v, "scene.spheres");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Obj so(arr[i], "scene.spheres[" + std::to_string(i) + "]");
      Sphere sp;
      so.get("center", sp.center);
      so.get("radius", sp.radius);
      so.get("color_a", sp.color_a);
      so.get("color_b", sp.color_b);
      so.get("frequency", sp.frequency);
      so.finish();
      s.spheres.push_back(sp);
    }
  }
  o.finish();
}

void read_trajectory(const json& j, Trajectory& t) {
  Obj o(j, "trajectory");
  o.get_enum("kind", t.kind, parse_trajectory_kind);
  o.get("fx", t.fx);
  o.get("fy", t.fy);
  o.get("near", t.near);
  o.get("far", t.far);
  o.get("view_yaw_spacing", t.view_yaw_spacing);
  o.get("origin", t.origin);
  o.get("velocity", t.velocity);
  o.get("orbit_center", t.orbit_center);
  o.get("angular_speed", t.angular_speed);
  o.finish();
}

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

json opt_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

CachePolicy CacheConfig::policy(int steps) const {
  if (branch_mode == BranchMode::kDisabled) return CachePolicy::disabled(steps);
  return CachePolicy::make(branch_mode, threshold,
                           rescale.value_or(default_rescale_polynomial()),
                           steps, force_compute_steps);
}

void PipelineConfig::sync() {
  trajectory.frames = dit.frames;
  trajectory.views = dit.num_views;
  trajectory.width = dit.image_width();
  trajectory.height = dit.image_height();
}

void PipelineConfig::validate() const {
  dit.validate();
  if (grid.cells < 1) throw ConfigError("bev.cells: must be >= 1");
  if (!(grid.extent_m > 0.0)) throw ConfigError("bev.extent_m: must be > 0");
  if (grid.classes < 1) throw ConfigError("bev.classes: must be >= 1");
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BevBox& b = boxes[i];
    const std::string k = "bev.boxes[" + std::to_string(i) + "]";
    if (b.class_id < 0 || b.class_id >= grid.classes)
      throw ConfigError(k + ".class_id: outside [0, bev.classes)");
    if (!(b.width > 0.0 && b.length > 0.0))
      throw ConfigError(k + ".size: extents must be > 0");
  }
  if (cache.degree < 0) throw ConfigError("cache.degree: must be >= 0");
  if (cache.rescale && cache.rescale->coefficients.empty())
    throw ConfigError("cache.rescale: polynomial is empty");
  cache.policy(dit.steps).validate(dit.steps);
  for (const auto& [kind, s] : quant) {
    try {
      s.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("quant." + std::string(to_string(kind)) + "." +
                        e.what());
    }
  }
  recon.validate();
  if (raster.tile_size < 1) throw ConfigError("raster.tile_size: must be >= 1");
  scene.validate();
  trajectory.validate();
  if (trajectory.frames != dit.frames || trajectory.views != dit.num_views ||
      trajectory.width != dit.image_width() ||
      trajectory.height != dit.image_height()) {
    throw ConfigError("trajectory: geometry does not follow dit (call sync)");
  }
  if (output_dir.empty()) throw ConfigError("output_dir: must be non-empty");
  if (profile.repetitions < 3)
    throw ConfigError("profile.repetitions: must be >= 3");
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  Obj o(j, "");
  const json* version = o.raw("schema_version");
  if (!version) throw ConfigError("schema_version: missing");
  if (!version->is_number_integer() ||
      version->get<int>() != kConfigSchemaVersion) {
    throw ConfigError("schema_version: expected " +
                      std::to_string(kConfigSchemaVersion));
  }
  o.get("prompt", c.prompt);
  o.get("seed", c.dit.seed);
  o.get("output_dir", c.output_dir);
  if (const json* v = o.raw("bev")) read_bev(*v, c);
  if (const json* v = o.raw("dit")) read_dit(*v, c.dit);
  if (const json* v = o.raw("cache")) read_cache(*v, c.cache);
  if (const json* v = o.raw("quant")) read_quant(*v, c.quant);
  if (const json* v = o.raw("recon")) read_recon(*v, c.recon);
  if (const json* v = o.raw("raster")) {
    Obj r(*v, "raster");
    r.get("tile_size", c.raster.tile_size);
    r.finish();
  }
  if (const json* v = o.raw("scene")) read_scene(*v, c.scene);
  if (const json* v = o.raw("trajectory")) read_trajectory(*v, c.trajectory);
  if (const json* v = o.raw("profile")) {
    Obj p(*v, "profile");
    p.get("repetitions", c.profile.repetitions);
    p.finish();
  }
  if (const json* v = o.raw("calibrate")) {
    Obj p(*v, "calibrate");
    p.get("constant_stub", c.calibrate.constant_stub);
    p.finish();
  }
  o.finish();
  c.sync();
  c.validate();
  return c;
}

json scheme_to_json(const QuantScheme& s) {
  return {{"q_format", to_string(s.q_format)},
          {"k_format", to_string(s.k_format)},
          {"p_format", to_string(s.p_format)},
          {"v_format", to_string(s.v_format)},
          {"k_smoothing", s.k_smoothing},
          {"block_size", s.block_size}};
}

json config_to_json(const PipelineConfig& c) {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["prompt"] = c.prompt;
  j["seed"] = c.dit.seed;
  j["output_dir"] = c.output_dir;

  json boxes = json::array();
  for (const BevBox& b : c.boxes) {
    boxes.push_back({{"center", {b.center_x, b.center_y}},
                     {"size", {b.width, b.length}},
                     {"yaw", b.yaw},
                     {"class_id", b.class_id}});
  }
  j["bev"] = {{"extent_m", c.grid.extent_m},
              {"cells", c.grid.cells},
              {"classes", c.grid.classes},
              {"boxes", boxes}};

  json pattern = json::array();
  for (BlockKind k : c.dit.block_pattern) pattern.push_back(to_string(k));
  j["dit"] = {{"views", c.dit.num_views},
              {"frames", c.dit.frames},
              {"latent_height", c.dit.latent_height},
              {"latent_width", c.dit.latent_width},
              {"channels", c.dit.channels},
              {"heads", c.dit.heads},
              {"depth", c.dit.depth},
              {"block_pattern", pattern},
              {"steps", c.dit.steps},
              {"guidance", c.dit.guidance_weight},
              {"mlp_ratio", c.dit.mlp_ratio},
              {"decoder_upsample", c.dit.decoder_upsample}};

  j["cache"] = {{"branch_mode", to_string(c.cache.branch_mode)},
                {"threshold", c.cache.threshold},
                {"degree", c.cache.degree},
                {"rescale", c.cache.rescale
                                ? json(c.cache.rescale->coefficients)
                                : json(nullptr)},
                {"force_compute_steps", c.cache.force_compute_steps}};

  json quant = json::object();
  for (const auto& [kind, s] : c.quant) {
    quant[std::string(to_string(kind))] = scheme_to_json(s);
  }
  j["quant"] = quant;

  j["recon"] = {{"delta", c.recon.delta},
                {"per_pixel_stride", c.recon.per_pixel_stride},
                {"base_alpha", c.recon.base_alpha},
                {"scale_factor", c.recon.scale_factor},
                {"neighbor_weight", c.recon.neighbor_weight}};
  j["raster"] = {{"tile_size", c.raster.tile_size}};

  json spheres = json::array();
  for (const Sphere& s : c.scene.spheres) {
    spheres.push_back({{"center", vec_json(s.center)},
                       {"radius", s.radius},
                       {"color_a", vec_json(s.color_a)},
                       {"color_b", vec_json(s.color_b)},
                       {"frequency", s.frequency}});
  }
  j["scene"] = {{"ground_y", opt_json(c.scene.ground_y)},
                {"wall_z", opt_json(c.scene.wall_z)},
                {"background", vec_json(c.scene.background)},
                {"spheres", spheres}};

  const Trajectory& t = c.trajectory;
  j["trajectory"] = {{"kind", to_string(t.kind)},
                     {"fx", t.fx},
                     {"fy", t.fy},
                     {"near", t.near},
                     {"far", t.far},
                     {"view_yaw_spacing", t.view_yaw_spacing},
                     {"origin", vec_json(t.origin)},
                     {"velocity", vec_json(t.velocity)},
                     {"orbit_center", vec_json(t.orbit_center)},
                     {"angular_speed", t.angular_speed}};
  j["profile"] = {{"repetitions", c.profile.repetitions}};
  j["calibrate"] = {{"constant_stub", c.calibrate.constant_stub}};
  return j;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": not valid JSON (" + e.what() + ")");
  }
  return config_from_json(j);
}

}  // namespace sf
