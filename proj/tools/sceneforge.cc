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

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sf/commands.h"
#include "sf/config.h"
#include "sf/kernels.h"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Text-and-layout driven multi-view video generation with "
               "step caching and quantized attention, followed by "
               "feed-forward gaussian scene reconstruction."};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<std::string> output;
  std::optional<std::string> frames;
  std::optional<std::string> trace;
  bool reuse_frames = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Pipeline config (JSON)")
        ->required();
    sub->add_option("--seed", seed, "Override the sampling seed");
    sub->add_option("--threshold", threshold, "Override the cache threshold");
    sub->add_option("-o,--output", output, "Override the output directory");
  };
  auto* gen = app.add_subcommand("generate", "Sample frames");
  auto* rec = app.add_subcommand("reconstruct", "Reconstruct scenes from frames");
  auto* pipe = app.add_subcommand("pipeline", "Generate, reconstruct, evaluate");
  auto* cal = app.add_subcommand("calibrate", "Fit the cache rescale polynomial");
  auto* prof = app.add_subcommand("profile", "Block timing and range statistics");
  auto* rend = app.add_subcommand("render-scene",
                                  "Ray-trace the synthetic scene into frames");
  for (auto* s : {gen, rec, pipe, cal, prof, rend}) common(s);
  rec->add_option("--frames", frames, "Frame directory (default <output>/frames)");
  rend->add_option("--frames", frames, "Frame directory (default <output>/frames)");
  pipe->add_flag("--reuse-frames", reuse_frames,
                 "Skip generation when a complete frame set exists");
  cal->add_option("--trace", trace, "Fit a recorded trace instead of sampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : sf::kExitConfig;
  }

  try {
    const sf::PipelineConfig cfg = sf::apply_overrides(
        sf::load_config(config_path), sf::Overrides{seed, threshold, output});
    std::clog << "kernels: " << sf::kernels::isa_name(sf::kernels::active().isa)
              << "\n";
    if (*gen) {
      sf::cmd_generate(cfg, std::cout);
    } else if (*rec) {
      sf::cmd_reconstruct(
          cfg, frames ? fs::path(*frames) : sf::paths::frames_dir(cfg), std::cout);
    } else if (*pipe) {
      sf::cmd_pipeline(cfg, reuse_frames, std::cout);
    } else if (*cal) {
      sf::cmd_calibrate(cfg, trace ? std::optional<fs::path>(*trace) : std::nullopt,
                        std::cout);
    } else if (*prof) {
      sf::cmd_profile(cfg, std::cout);
    } else if (*rend) {
      sf::cmd_render_scene(
          cfg, frames ? fs::path(*frames) : sf::paths::frames_dir(cfg), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sf::exit_code_for(e);
  }
  return sf::kExitOk;
}
