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

#include "sf/commands.h"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "sf/dit.h"
#include "sf/gaussians.h"
#include "sf/profile.h"
#include "sf/recon.h"
#include "sf/sampler.h"

namespace sf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

template <typename F>
auto run_stage(const char* stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, exit_code_for(e),
                     std::string(stage) + ": " + e.what());
  }
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p, std::ios::trunc);
  if (!f || !(f << j.dump(2) << "\n") || !f.flush()) {
    throw IoError("cannot write " + p.string());
  }
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw IoError("cannot open " + p.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

// Existing report of an earlier stage, or a fresh one.
RunReport load_or_new_report(const PipelineConfig& c) {
  const fs::path p = paths::report_file(c);
  if (fs::exists(p)) {
    try {
      return parse_report(p);
    } catch (const IoError&) {
      // Unreadable leftovers are replaced.
    }
  }
  return RunReport{};
}

// Q, K, V of the first attention call of each quantized kind.
class FirstCallCapture : public ForwardObserver {
 public:
  explicit FirstCallCapture(const std::map<BlockKind, QuantScheme>& schemes)
      : schemes_(schemes) {}
  void on_attention(std::size_t, BlockKind kind, const Tensor& q,
                    const Tensor& k, const Tensor& v) override {
    if (schemes_.contains(kind) && !captured.contains(kind)) {
      captured.emplace(kind, std::array<Tensor, 3>{q, k, v});
    }
  }
  std::map<BlockKind, std::array<Tensor, 3>> captured;

 private:
  const std::map<BlockKind, QuantScheme>& schemes_;
};

// Leading rows of projected [n, C] activations split into heads.
Tensor head_slice(const Tensor& x, std::size_t rows, std::size_t heads) {
  const std::size_t c = x.dim(1), d = c / heads;
  rows = std::min(rows, x.dim(0));
  Tensor out({heads, rows, d});
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j)
        out[(h * rows + r) * d + j] = x[r * c + h * d + j];
  return out;
}

json accuracy_json(const AccuracyReport& a) {
  return {{"cosine_similarity", a.cosine_similarity},
          {"relative_l1", a.relative_l1},
          {"max_abs_err", a.max_abs_err}};
}

json policy_json(const CachePolicy& p) {
  return {{"branch_mode", to_string(p.branch_mode)},
          {"threshold", p.threshold},
          {"rescale", p.rescale.coefficients},
          {"force_compute_steps", p.force_compute_steps}};
}

std::vector<std::vector<Image>> read_frames(const PipelineConfig& c,
                                            const fs::path& dir) {
  std::vector<std::vector<Image>> frames(c.dit.frames);
  for (int t = 0; t < c.dit.frames; ++t) {
    for (int v = 0; v < c.dit.num_views; ++v) {
      const fs::path p = paths::frame_file(dir, t, v);
      if (!fs::exists(p)) throw IoError("missing frame file " + p.string());
      Image img = read_ppm(p);
      if (img.width != c.trajectory.width || img.height != c.trajectory.height) {
        throw IoError(p.string() + ": expected " +
                      std::to_string(c.trajectory.width) + "x" +
                      std::to_string(c.trajectory.height) + " pixels");
      }
      frames[t].push_back(std::move(img));
    }
  }
  return frames;
}

bool frames_complete(const PipelineConfig& c, const fs::path& dir) {
  for (int t = 0; t < c.dit.frames; ++t)
    for (int v = 0; v < c.dit.num_views; ++v)
      if (!fs::exists(paths::frame_file(dir, t, v))) return false;
  return true;
}

void write_frames(const std::vector<Image>& frames, int views,
                  const fs::path& dir) {
  ensure_dir(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    write_ppm(paths::frame_file(dir, static_cast<int>(i) / views,
                                static_cast<int>(i) % views),
              frames[i]);
  }
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (auto* s = dynamic_cast<const StageError*>(&e)) return s->code();
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  return kExitRuntime;
}

PipelineConfig apply_overrides(PipelineConfig c, const Overrides& o) {
  if (o.seed) c.dit.seed = *o.seed;
  if (o.threshold) c.cache.threshold = *o.threshold;
  if (o.output) c.output_dir = *o.output;
  c.sync();
  c.validate();
  return c;
}

namespace paths {
fs::path frames_dir(const PipelineConfig& c) {
  return fs::path(c.output_dir) / "frames";
}
fs::path frame_file(const fs::path& dir, int t, int view) {
  return dir / ("frame_" + std::to_string(t) + "_" + std::to_string(view) +
                ".ppm");
}
fs::path scenes_dir(const PipelineConfig& c) {
  return fs::path(c.output_dir) / "scenes";
}
fs::path scene_file(const fs::path& dir, std::int64_t t) {
  return dir / ("scene_" + std::to_string(t) + ".fgs");
}
fs::path report_file(const PipelineConfig& c) {
  return fs::path(c.output_dir) / "report.json";
}
fs::path policy_file(const PipelineConfig& c) {
  return fs::path(c.output_dir) / "policy.json";
}
fs::path trace_file(const PipelineConfig& c) {
  return fs::path(c.output_dir) / "calibration_trace.json";
}
fs::path profile_file(const PipelineConfig& c) {
  return fs::path(c.output_dir) / "profile.json";
}
}  // namespace paths

RunReport cmd_generate(const PipelineConfig& c, std::ostream& log) {
  c.validate();
  ensure_dir(c.output_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const DiTModel model(c.dit);
  const Conditioning cond = model.make_conditioning(c.prompt, c.boxes, c.grid);
  const CachePolicy policy = c.cache.policy(c.dit.steps);

  FirstCallCapture capture(c.quant);
  SampleOptions opts;
  if (!c.quant.empty()) {
    opts.schemes = &c.quant;
    opts.observer = &capture;
  }
  const SampleResult r = sample(model, cond, policy, opts);
  write_frames(r.frames, c.dit.num_views, paths::frames_dir(c));

  json gen;
  gen["steps"] = c.dit.steps;
  gen["cache"]["policy"] = policy_json(policy);
  for (Branch b : {Branch::kCondition, Branch::kUncondition}) {
    const auto& bc = r.report.branches[static_cast<int>(b)];
    gen["cache"]["branches"][std::string(to_string(b))] = {
        {"computed_steps", bc.computed_steps},
        {"reused_steps", bc.reused_steps}};
  }
  json frames = json::array();
  for (int t = 0; t < c.dit.frames; ++t)
    for (int v = 0; v < c.dit.num_views; ++v)
      frames.push_back(paths::frame_file("frames", t, v).generic_string());
  gen["frames"] = frames;

  json quant = json::object();
  for (const auto& [kind, qkv] : capture.captured) {
    const std::size_t heads = static_cast<std::size_t>(c.dit.heads);
    AttentionInputs inp{head_slice(qkv[0], 64, heads),
                        head_slice(qkv[1], 64, heads),
                        head_slice(qkv[2], 64, heads), std::nullopt};
    const QuantScheme& s = c.quant.at(kind);
    quant[std::string(to_string(kind))] = {
        {"scheme", scheme_to_json(s)},
        {"accuracy", accuracy_json(sage_attention(inp, s).report)}};
  }
  gen["quantization"] = quant;

  json block_timing = json::object();
  for (BlockKind k : kAllBlockKinds) {
    auto it = r.report.block_seconds.find(k);
    block_timing[std::string(to_string(k))] =
        it == r.report.block_seconds.end() ? 0.0 : it->second;
  }
  gen["timing"] = {{"sampling_seconds", r.report.total_seconds},
                   {"block_seconds", block_timing}};

  RunReport report = load_or_new_report(c);
  report.config = config_to_json(c);
  report.generation = gen;
  report.timing["generation_seconds"] = seconds_since(t0);
  emit_report(report, paths::report_file(c));

  const auto& cb = r.report.branches[0];
  log << "generate: " << r.frames.size() << " frames, condition branch "
      << cb.computed_steps << " computed / " << cb.reused_steps
      << " reused, " << std::fixed << std::setprecision(2)
      << r.report.total_seconds << " s\n";
  return report;
}

RunReport cmd_reconstruct(const PipelineConfig& c, const fs::path& frames_dir,
                          std::ostream& log) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  // All inputs are read and checked before any output exists.
  const VectorFrameSource source(read_frames(c, frames_dir));
  const std::vector<FrameGaussians> scenes =
      reconstruct_sequence(source, c.recon, c.trajectory, c.scene);

  ensure_dir(c.output_dir);
  const fs::path final_dir = paths::scenes_dir(c);
  const fs::path tmp_dir = fs::path(c.output_dir) / ".scenes.partial";
  json files = json::array(), counts = json::array();
  try {
    fs::remove_all(tmp_dir);
    ensure_dir(tmp_dir);
    for (const FrameGaussians& fg : scenes) {
      write_scene(paths::scene_file(tmp_dir, fg.t), fg);
      files.push_back(paths::scene_file("scenes", fg.t).generic_string());
      counts.push_back(fg.gaussians.size());
    }
    fs::remove_all(final_dir);
    fs::rename(tmp_dir, final_dir);
  } catch (const fs::filesystem_error& e) {
    std::error_code ec;
    fs::remove_all(tmp_dir, ec);
    throw IoError(std::string("writing scenes: ") + e.what());
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp_dir, ec);
    throw;
  }
  const double recon_seconds = seconds_since(t0);

  // Held-out evaluation: timestep t rebuilt from its neighbours only.
  const auto t1 = std::chrono::steady_clock::now();
  json eval_frames = json::array();
  double psnr_sum = 0.0, ssim_sum = 0.0;
  int scored = 0;
  for (const FrameGaussians& fg : scenes) {
    const int t = static_cast<int>(fg.t);
    const RecordingFrameSource audit(source);
    const FrameGaussians held = reconstruct_frame(
        audit, t, c.recon, c.trajectory, c.scene, ReconMode::kEvaluation);
    if (audit.touched_timestep(t)) {
      throw InvariantError("evaluation reconstruction read frame " +
                           std::to_string(t));
    }
    std::vector<Image> images;
    std::vector<Camera> cams;
    for (int v = 0; v < c.dit.num_views; ++v) {
      images.push_back(source.frame(t, v));
      cams.push_back(estimate_pose_stub(t, v, c.trajectory));
    }
    json views = json::array();
    for (const ViewScore& s :
         novel_view_eval({held}, t, images, cams, c.scene.background,
                         c.raster)) {
      views.push_back({{"view", s.view}, {"psnr", s.psnr}, {"ssim", s.ssim}});
      psnr_sum += s.psnr;
      ssim_sum += s.ssim;
      ++scored;
    }
    eval_frames.push_back({{"t", t}, {"views", views}});
  }

  RunReport report = load_or_new_report(c);
  report.config = config_to_json(c);
  report.reconstruction = {{"delta", c.recon.delta},
                           {"interior_frames", scenes.size()},
                           {"scene_files", files},
                           {"gaussians", counts},
                           {"timing", {{"seconds", recon_seconds}}}};
  report.evaluation = {
      {"mode", "held_out_neighbors"},
      {"frames", eval_frames},
      {"mean_psnr", scored ? psnr_sum / scored : 0.0},
      {"mean_ssim", scored ? ssim_sum / scored : 0.0},
      {"timing", {{"seconds", seconds_since(t1)}}}};
  report.timing["reconstruction_seconds"] = recon_seconds;
  report.timing["evaluation_seconds"] = seconds_since(t1);
  emit_report(report, paths::report_file(c));

  log << "reconstruct: " << scenes.size() << " scene files, held-out PSNR "
      << std::fixed << std::setprecision(2)
      << (scored ? psnr_sum / scored : 0.0) << " dB, SSIM "
      << std::setprecision(4) << (scored ? ssim_sum / scored : 0.0) << "\n";
  return report;
}

RunReport cmd_pipeline(const PipelineConfig& c, bool reuse_frames,
                       std::ostream& log) {
  run_stage("config", [&] {
    c.validate();
    return 0;
  });
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path frames = paths::frames_dir(c);
  const bool skip = reuse_frames && frames_complete(c, frames);
  if (skip) {
    log << "generate: reusing frames in " << frames.string() << "\n";
  } else {
    // A fresh run starts from an empty report.
    std::error_code ec;
    fs::remove(paths::report_file(c), ec);
    run_stage("generate", [&] { return cmd_generate(c, log); });
  }
  run_stage("reconstruct", [&] { return cmd_reconstruct(c, frames, log); });

  RunReport report = run_stage("report", [&] { return parse_report(paths::report_file(c)); });
  report.generation["reused_frames"] = skip;
  report.timing["total_seconds"] = seconds_since(t0);
  run_stage("report", [&] {
    emit_report(report, paths::report_file(c));
    return 0;
  });
  log << "pipeline: done in " << std::fixed << std::setprecision(1)
      << report.timing["total_seconds"].get<double>() << " s\n";
  return report;
}

json trace_to_json(const CalibrationTrace& trace) {
  json pts = json::array();
  for (const TracePoint& p : trace.points) {
    pts.push_back({{"step", p.step},
                   {"branch", to_string(p.branch)},
                   {"input_distance", p.input_distance},
                   {"output_distance", p.output_distance}});
  }
  return {{"schema_version", 1}, {"points", pts}};
}

CalibrationTrace trace_from_json(const json& j) {
  if (!j.is_object() || j.value("schema_version", 0) != 1 ||
      !j.contains("points") || !j["points"].is_array()) {
    throw IoError("trace: expected {schema_version: 1, points: [...]}");
  }
  CalibrationTrace t;
  try {
    for (const json& p : j["points"]) {
      TracePoint tp;
      tp.step = p.at("step").get<int>();
      tp.branch = parse_trace_branch(p.at("branch").get<std::string>());
      tp.input_distance = p.at("input_distance").get<double>();
      tp.output_distance = p.at("output_distance").get<double>();
      t.points.push_back(tp);
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("trace: malformed point: ") + e.what());
  }
  return t;
}

json cmd_calibrate(const PipelineConfig& c,
                   const std::optional<fs::path>& trace_path,
                   std::ostream& log) {
  c.validate();
  ensure_dir(c.output_dir);
  CalibrationTrace trace;
  std::string source;
  if (trace_path) {
    trace = trace_from_json(read_json(*trace_path));
    source = trace_path->string();
  } else {
    DiTModel model(c.dit);
    if (c.calibrate.constant_stub) {
      Linear& head = model.weights().head;
      head.w = Tensor(head.w.shape(), 0.0);
      std::fill(head.b.begin(), head.b.end(), 1.0);
    }
    const Conditioning cond = model.make_conditioning(c.prompt, c.boxes, c.grid);
    trace = record_trace(model, cond);
    source = c.calibrate.constant_stub ? "constant_stub" : "model";
  }
  write_json(paths::trace_file(c), trace_to_json(trace));

  json branches = json::object();
  Polynomial cond_poly;
  for (TraceBranch b :
       {TraceBranch::kAll, TraceBranch::kCondition, TraceBranch::kUncondition}) {
    const Polynomial p = calibrate(trace, c.cache.degree, b);
    const double res = calibration_residual(trace, p, b);
    branches[std::string(to_string(b))] = {
        {"coefficients", p.coefficients},
        {"residual", res},
        {"pairs", trace.for_branch(b).size()}};
    if (b == TraceBranch::kCondition) cond_poly = p;
    log << "calibrate: " << std::left << std::setw(12) << to_string(b)
        << " residual " << std::scientific << std::setprecision(3) << res
        << std::defaultfloat << "\n";
  }
  json doc = {{"schema_version", 1},
              {"degree", c.cache.degree},
              {"source", source},
              {"branches", branches},
              {"cache",
               {{"branch_mode", to_string(BranchMode::kConditionOnly)},
                {"threshold", c.cache.threshold},
                {"rescale", cond_poly.coefficients}}}};
  write_json(paths::policy_file(c), doc);
  return doc;
}

json cmd_profile(const PipelineConfig& c, std::ostream& log) {
  c.validate();
  ensure_dir(c.output_dir);
  const DiTModel model(c.dit);
  const Conditioning cond = model.make_conditioning(c.prompt, c.boxes, c.grid);
  const SampleInput input = default_sample_input(model, cond);
  const auto timing = profile_block_kinds(model, input, c.profile.repetitions);
  const auto stats = collect_range_stats(model, input);

  json kinds = json::object(), seconds = json::object();
  log << "kind          blocks   seconds    share\n";
  for (const auto& [kind, kt] : timing) {
    const std::string name(to_string(kind));
    kinds[name] = {{"blocks", kt.blocks}, {"share", kt.share}};
    seconds[name] = kt.total_seconds;
    log << std::left << std::setw(12) << name << std::right << std::setw(8)
        << kt.blocks << std::setw(10) << std::fixed << std::setprecision(4)
        << kt.total_seconds << std::setw(9) << std::setprecision(3)
        << kt.share << "\n";
  }
  auto ts = [](const TensorStats& s) {
    return json{{"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"std", s.std}};
  };
  json records = json::array();
  for (const RangeStats& r : stats) {
    records.push_back({{"block", r.block_index},
                       {"kind", to_string(r.kind)},
                       {"q", ts(r.q)},
                       {"k", ts(r.k)},
                       {"v", ts(r.v)}});
  }
  json rec = json::object();
  if (!stats.empty()) {
    for (const auto& [kind, s] : recommend_scheme(stats)) {
      rec[std::string(to_string(kind))] = scheme_to_json(s);
    }
  }
  json doc = {{"schema_version", 1},
              {"repetitions", c.profile.repetitions},
              {"block_kinds", kinds},
              {"range_stats", records},
              {"recommended_schemes", rec},
              {"timing", {{"median_seconds", seconds}}}};
  write_json(paths::profile_file(c), doc);
  log << "profile: " << records.size() << " attention invocations recorded\n";
  return doc;
}

void cmd_render_scene(const PipelineConfig& c, const fs::path& frames_dir,
                      std::ostream& log) {
  c.validate();
  std::vector<Image> frames;
  for (int t = 0; t < c.dit.frames; ++t)
    for (int v = 0; v < c.dit.num_views; ++v)
      frames.push_back(
          render_scene(c.scene, estimate_pose_stub(t, v, c.trajectory)).image);
  write_frames(frames, c.dit.num_views, frames_dir);
  log << "render-scene: " << frames.size() << " frames in "
      << frames_dir.string() << "\n";
}

}  // namespace sf
