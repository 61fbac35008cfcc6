// Copyright 2026 The probekit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// probekit: command-line front end.
//
//   probekit synth     --spec synth.json --outdir data/
//   probekit partition --config data/config.json --outdir run/
//   probekit probe     --config data/config.json --outdir run/ --jobs 4
//
// Exit status: 0 when every requested task succeeded, 1 when some task
// failed (a JSON failure list is printed on stderr), 2 on usage or fatal
// errors.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "probekit/pipeline.hpp"

namespace {

using probekit::CommandOutcome;
using probekit::Failure;

void print_failures(const std::string& command, const std::vector<Failure>& failures) {
  probekit::ojson j;
  j["command"] = command;
  j["failures"] = probekit::failures_json(failures);
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probekit: probing and analysis toolkit for speaker and spoof embeddings"};
  app.set_version_flag("--version", std::string(probekit::kVersion));
  app.require_subcommand(1);

  std::string config_path, outdir = "probekit_out";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  app.add_option("--config", config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--outdir", outdir, "Output directory")->capture_default_str();
  app.add_option("--seed", seed, "Override the global seed");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  auto add = [&](const char* name, const char* help) { return app.add_subcommand(name, help)->fallthrough(); };
  add("partition", "Write train/eval splits for the schemes the tasks use");
  add("traits", "Extract acoustic traits from the manifest's audio");
  add("probe", "Train and evaluate probes; write report.json and charts");
  add("distance", "Gender-wise bonafide-to-spoof distance analysis");
  add("perturb", "Write speed-perturbed copies of the manifest's audio");
  auto* sweep = add("sweep", "EER for each perturbation rate's score file");
  auto* synth = add("synth", "Generate a synthetic corpus");
  add("report", "Re-render charts and print a summary of report.json");

  std::string chart_path, spec_path;
  sweep->add_option("--chart", chart_path, "Path of the EER chart (default <outdir>/sweep/eer.svg)");
  synth->add_option("--spec", spec_path, "Synthetic corpus spec (JSON)")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    probekit::RunContext ctx;
    ctx.outdir = outdir;
    ctx.jobs = jobs;
    if (!config_path.empty())
      ctx.config = probekit::load_config(config_path, seed);
    else if (command != "synth" && command != "report")
      throw probekit::Error("--config is required for '" + command + "'");
    else
      ctx.config = probekit::resolve_config(probekit::json::object(), ".", seed);

    CommandOutcome out;
    if (command == "partition") {
      out = probekit::cmd_partition(ctx);
    } else if (command == "traits") {
      out = probekit::cmd_traits(ctx);
    } else if (command == "probe") {
      out = probekit::cmd_probe(ctx);
    } else if (command == "distance") {
      out = probekit::cmd_distance(ctx);
    } else if (command == "perturb") {
      out = probekit::cmd_perturb(ctx);
    } else if (command == "sweep") {
      std::optional<std::filesystem::path> chart;
      if (!chart_path.empty()) chart = chart_path;
      out = probekit::cmd_sweep(ctx, chart);
    } else if (command == "synth") {
      probekit::json spec;
      if (!spec_path.empty())
        spec = probekit::json::parse(probekit::read_file(spec_path));
      else if (ctx.config.synth)
        spec = *ctx.config.synth;
      else
        throw probekit::Error("synth needs --spec or a 'synth' block in the config");
      if (seed) spec["seed"] = *seed;
      out = probekit::cmd_synth(ctx, spec);
    } else if (command == "report") {
      out = probekit::cmd_report(ctx, std::cout);
    }
    if (!out.ok()) {
      print_failures(command, out.failures);
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "probekit " << command << ": " << e.what() << "\n";
    print_failures(command, {{command, "", e.what()}});
    return 2;
  }
}
