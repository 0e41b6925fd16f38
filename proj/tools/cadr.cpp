// Copyright (c) 2026 The cadr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line entry point: one subcommand per pipeline stage plus
// `pipeline`, `validate` and `config`.
//
// Exit codes: 0 success, 2 configuration error, 3 stage failure,
// 4 validation failure.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cadr/pipeline/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitValidation = 4;

struct Flags {
  std::string run = "run";
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool text_bypass = false;
  bool external_codec = false;
  std::string llm_endpoint;
  std::string llm_model;
  bool quiet = false;
  bool interactive = false;
};

cadr::RunConfig ResolveConfig(const Flags& f) {
  cadr::RunConfig c;
  const cadr::fs::path stored = cadr::fs::path(f.run) / "config.json";
  if (!f.config.empty()) {
    c = cadr::LoadRunConfig(f.config);
  } else if (cadr::fs::exists(stored)) {
    const auto j = nlohmann::ordered_json::parse(cadr::ReadTextFile(stored));
    c = cadr::RunConfigFromJson(j.at("config"));
  }
  if (f.seed) c.seed = *f.seed;
  if (f.text_bypass) c.clarify.text_bypass = true;
  if (f.external_codec) c.distortion.external_codec = true;
  if (!f.llm_endpoint.empty()) c.llm.endpoint = f.llm_endpoint;
  if (!f.llm_model.empty()) c.llm.model = f.llm_model;
  c.detectors.cnn.input_dim = c.oracle.d_model;
  cadr::ValidateConfig(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cause-aware ASR error detection and clarification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--run", f.run, "Run directory")->capture_default_str();
  app.add_option("--config", f.config, "Run configuration (JSON)");
  app.add_option("--seed", f.seed, "Override the run seed");
  app.add_option("--jobs", f.jobs, "Worker threads within a stage")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--text-bypass", f.text_bypass, "Feed clarification replies as text");
  app.add_flag("--external-codec", f.external_codec, "Use ffmpeg/libopus for packet loss");
  app.add_option("--llm-endpoint", f.llm_endpoint, "OpenAI-compatible chat endpoint (opt-in)");
  app.add_option("--llm-model", f.llm_model, "Chat model name");
  app.add_flag("-q,--quiet", f.quiet, "No progress output");

  std::vector<std::pair<CLI::App*, cadr::Stage>> stage_cmds;
  for (auto s : cadr::kAllStages) {
    const std::string name(cadr::StageName(s));
    stage_cmds.emplace_back(app.add_subcommand(name, "Run the " + name + " stage"), s);
  }
  CLI::App* clarify = stage_cmds[static_cast<int>(cadr::Stage::kClarify)].first;
  clarify->add_flag("--interactive", f.interactive, "Answer clarification questions at the terminal");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage, resuming from current artifacts");
  auto* validate = app.add_subcommand("validate", "Check a run directory for dangling or orphaned artifacts");
  auto* config = app.add_subcommand("config", "Print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  cadr::PipelineOptions opt;
  opt.jobs = f.jobs;
  opt.log = f.quiet ? nullptr : &std::cerr;
  opt.interactive = f.interactive;

  try {
    if (validate->parsed()) {
      const auto p = cadr::Pipeline::Open(f.run, opt);
      const auto violations = p.Validate();
      for (const auto& v : violations) std::cout << v << "\n";
      if (!violations.empty()) {
        std::cerr << violations.size() << " validation failure(s)\n";
        return kExitValidation;
      }
      std::cout << "ok\n";
      return 0;
    }
    const auto cfg = ResolveConfig(f);
    if (config->parsed()) {
      nlohmann::ordered_json j;
      j["config_hash"] = cadr::ConfigHash(cfg);
      j["config"] = cadr::ToJson(cfg);
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    cadr::Pipeline p(f.run, cfg, opt);
    p.Init();
    if (pipeline->parsed()) {
      p.RunAll();
    } else {
      for (const auto& [cmd, stage] : stage_cmds)
        if (cmd->parsed()) p.RunStage(stage);
    }
    return 0;
  } catch (const cadr::StageError& e) {
    std::cerr << e.what() << "\n";
    return kExitStage;
  } catch (const cadr::ValidationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
}
