// Copyright 2026 The cqdraw Authors.
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

// Command-line entry point: train, simulate, exp, analyze, ingest and serve.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cqdraw/analysis.h"
#include "cqdraw/harness.h"
#include "cqdraw/ingest.h"
#include "cqdraw/service.h"
#include "cqdraw/text_util.h"

namespace {

using namespace cqdraw;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value
  std::optional<uint64_t> seed;
  std::string out;
  bool serial = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "experiment config file (key = value lines)")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "override one config key, as key=value");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_flag("--serial", o.serial, "run the serial reference path");
}

ExperimentConfig build_config(const CommonOptions& o) {
  ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{} : load_experiment_config(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    c.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  return c;
}

Execution execution_of(const CommonOptions& o) { return o.serial ? Execution::kSerial : Execution::kParallel; }

std::string corpus_stats(const std::vector<CorpusDialogue>& corpus, const AnnotationJoin* join) {
  std::vector<std::vector<std::string>> rows = {
      {"dialogues", std::to_string(corpus.size())},
      {"mean_turns", format_fixed(mean_turns(corpus), 3)},
  };
  if (join) {
    rows.push_back({"dialogues_with_cq_pct", format_fixed(100.0 * join->fraction_with_cq(), 2)});
    rows.push_back({"cqs_per_cq_dialogue", format_fixed(join->mean_cqs_per_cq_dialogue(), 3)});
    rows.push_back({"orphan_annotations", std::to_string(join->orphans.size())});
  }
  return markdown_table({"statistic", "value"}, rows);
}

int cmd_train(const CommonOptions& o) {
  const ExperimentConfig c = build_config(o);
  const World w = prepare_world(c, execution_of(o));
  for (const auto& path : save_world(w, c.output_dir)) std::cout << path << "\n";
  return 0;
}

int cmd_simulate(const CommonOptions& o, const std::string& policy, const std::string& render, int limit) {
  ExperimentConfig c = build_config(o);
  if (limit > 0) c.eval_dialogues = limit;
  const World w = prepare_world(c, execution_of(o));
  PolicyRun run = run_policy(w, policy, execution_of(o));
  if (limit > 0 && static_cast<int>(run.transcripts.size()) > limit) run.transcripts.resize(limit);
  std::string text;
  if (render == "text") {
    for (const auto& t : run.transcripts) text += render_transcript_text(t, *w.gallery) + "\n";
  } else {
    text = transcripts_jsonl(run.transcripts);
  }
  if (o.out.empty()) {
    std::cout << text;
  } else {
    std::filesystem::create_directories(o.out);
    write_file(o.out + "/transcripts." + (render == "text" ? "txt" : "jsonl"), text);
  }
  return 0;
}

int cmd_exp(const CommonOptions& o, const std::string& name) {
  ExperimentConfig c = build_config(o);
  c.experiment = name;
  const World w = prepare_world(c, execution_of(o));
  const ExperimentReport r = run_experiment(w, name, execution_of(o));
  write_report(r, c.output_dir);
  std::cout << "config hash " << r.config_hash << "\n";
  for (const auto& [file, body] : r.files) std::cout << c.output_dir << "/" << file << "\n";
  return 0;
}

int cmd_analyze(const std::string& corpus_path, const std::string& format, const std::string& annotations_path,
                const std::string& out) {
  const Gallery& g = default_gallery();
  const auto corpus = parse_codraw(g, read_file(corpus_path), parse_corpus_format(format));
  const auto records = parse_icr(read_file(annotations_path));
  const AnnotationJoin join = join_annotations(corpus, records);
  const auto rows = cluster_analysis(corpus, join, Lexicons::defaults(), reference_clusters());
  const std::string stats = corpus_stats(corpus, &join);
  if (out.empty()) {
    std::cout << stats << "\n" << clusters_markdown(rows);
    return 0;
  }
  std::filesystem::create_directories(out);
  write_file(out + "/corpus_stats.md", stats);
  write_file(out + "/clusters.csv", clusters_csv(rows));
  write_file(out + "/clusters.md", clusters_markdown(rows));
  std::cout << stats;
  return 0;
}

int cmd_ingest(const std::string& input, const std::string& format, uint64_t seed, const std::string& out) {
  const Gallery& g = default_gallery();
  const auto corpus = parse_codraw(g, read_file(input), parse_corpus_format(format));
  const CorpusSplit split = split_corpus(corpus, seed);
  std::filesystem::create_directories(out);
  write_file(out + "/corpus.jsonl", serialize_corpus_jsonl(corpus));
  std::vector<std::vector<std::string>> rows;
  for (const auto& id : split.train) rows.push_back({id, "train"});
  for (const auto& id : split.val) rows.push_back({id, "val"});
  for (const auto& id : split.test) rows.push_back({id, "test"});
  write_file(out + "/split.csv", csv_table({"dialogue_id", "split"}, rows));
  std::cout << corpus_stats(corpus, nullptr)
            << markdown_table({"split", "dialogues"}, {{"train", std::to_string(split.train.size())},
                                                       {"val", std::to_string(split.val.size())},
                                                       {"test", std::to_string(split.test.size())}});
  return 0;
}

// Small deterministic drawer for the playground when no weights are given.
std::shared_ptr<const Ensemble> default_service_drawer(uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  c.train_dialogues = 300;
  c.eval_dialogues = 1;
  c.study_dialogues = 1;
  c.ensemble_seeds = {0};
  World w = prepare_world(c);
  return w.drawer;
}

int cmd_serve(const std::string& weights, const std::string& host, int port, const std::string& static_dir,
              const std::string& transcripts, uint64_t seed) {
  const Gallery& g = default_gallery();
  std::shared_ptr<const Ensemble> drawer;
  if (weights.empty()) {
    std::cerr << "training default drawer weights (seed " << seed << ")\n";
    drawer = default_service_drawer(seed);
  } else {
    drawer = std::make_shared<const Ensemble>(load_ensemble(read_file(weights), g));
  }
  if (!transcripts.empty()) std::filesystem::create_directories(transcripts);
  SessionManager manager(g, drawer, ServiceOptions{transcripts});
  std::cerr << "listening on " << host << ":" << port << "\n";
  run_service(manager, host, port, static_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cqdraw: clarification questions for a collaborative drawing agent"};
  app.require_subcommand(1);

  CommonOptions train_opts;
  auto* train = app.add_subcommand("train", "train the drawer ensemble, checkpoints and decider");
  add_common(train, train_opts);

  CommonOptions sim_opts;
  std::string policy = "threshold:0.7";
  std::string render = "jsonl";
  int limit = 0;
  auto* simulate = app.add_subcommand("simulate", "run one policy over the evaluation dialogues");
  add_common(simulate, sim_opts);
  simulate->add_option("--policy", policy, "threshold:<theta> | random:<rate> | human | decider | decider:<file>");
  simulate->add_option("--render", render, "jsonl | text")->check(CLI::IsMember({"jsonl", "text"}));
  simulate->add_option("--limit", limit, "number of evaluation dialogues");

  CommonOptions exp_opts;
  std::string exp_name;
  auto* exp = app.add_subcommand("exp", "run a canned experiment and write its report");
  add_common(exp, exp_opts);
  exp->add_option("name", exp_name, "table1 | table2 | figure4 | calibration | study | clusters")
      ->required()
      ->check(CLI::IsMember({"table1", "table2", "figure4", "calibration", "study", "clusters"}));

  std::string analyze_corpus, analyze_annotations, analyze_out, analyze_format = "normalized";
  auto* analyze = app.add_subcommand("analyze", "corpus statistics and keyword clusters for an annotated corpus");
  analyze->add_option("--corpus", analyze_corpus)->required()->check(CLI::ExistingFile);
  analyze->add_option("--annotations", analyze_annotations)->required()->check(CLI::ExistingFile);
  analyze->add_option("--format", analyze_format)->check(CLI::IsMember({"official", "normalized"}));
  analyze->add_option("--out", analyze_out);

  std::string ingest_input, ingest_format = "official", ingest_out = "data/ingested";
  uint64_t ingest_seed = 0;
  auto* ingest = app.add_subcommand("ingest", "convert a corpus to normalized JSONL and write a split file");
  ingest->add_option("input", ingest_input)->required()->check(CLI::ExistingFile);
  ingest->add_option("--format", ingest_format)->check(CLI::IsMember({"official", "normalized"}));
  ingest->add_option("--seed", ingest_seed, "split seed");
  ingest->add_option("--out", ingest_out);

  std::string serve_weights, serve_host = "127.0.0.1", serve_static, serve_transcripts;
  int serve_port = 8080;
  uint64_t serve_seed = 0;
  auto* serve = app.add_subcommand("serve", "serve the session API and the playground bundle");
  serve->add_option("--weights", serve_weights, "drawer ensemble JSON")->check(CLI::ExistingFile);
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port);
  serve->add_option("--static", serve_static, "playground bundle directory")->check(CLI::ExistingDirectory);
  serve->add_option("--transcripts", serve_transcripts, "directory for closed-session transcripts");
  serve->add_option("--seed", serve_seed, "seed for the default weights");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_opts);
    if (*simulate) return cmd_simulate(sim_opts, policy, render, limit);
    if (*exp) return cmd_exp(exp_opts, exp_name);
    if (*analyze) return cmd_analyze(analyze_corpus, analyze_format, analyze_annotations, analyze_out);
    if (*ingest) return cmd_ingest(ingest_input, ingest_format, ingest_seed, ingest_out);
    if (*serve) return cmd_serve(serve_weights, serve_host, serve_port, serve_static, serve_transcripts, serve_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
