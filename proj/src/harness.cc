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

#include "cqdraw/harness.h"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>

#include "cqdraw/random.h"
#include "cqdraw/text_util.h"

namespace cqdraw {
namespace {

constexpr std::string_view kReplayConfound =
    "Replay mode: teller messages are replayed verbatim after machine questions, so later human "
    "messages may not match the machine canvas.";

std::string_view world_name(WorldMode m) { return m == WorldMode::kSynthetic ? "synthetic" : "replay"; }
std::string_view format_name(CorpusFormat f) { return f == CorpusFormat::kNormalized ? "normalized" : "official"; }
std::string_view selection_name(SelectionMode m) { return m == SelectionMode::kRaw ? "raw" : "normalized"; }

template <typename T, typename Fn>
std::string join_list(const std::vector<T>& values, Fn fmt) {
  std::vector<std::string> parts;
  for (const auto& v : values) parts.push_back(fmt(v));
  return join(parts, ",");
}

std::vector<std::string> parse_list(std::string_view value) {
  std::vector<std::string> out;
  for (auto part : split(value, ',')) {
    const auto t = trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::vector<double> parse_double_list(std::string_view value, std::string_view key) {
  std::vector<double> out;
  for (const auto& p : parse_list(value)) out.push_back(parse_double(p, key));
  return out;
}

std::vector<int> parse_int_list(std::string_view value, std::string_view key) {
  std::vector<int> out;
  for (const auto& p : parse_list(value)) out.push_back(static_cast<int>(parse_int(p, key)));
  return out;
}

bool parse_bool(std::string_view value, std::string_view key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw Error("invalid boolean for " + std::string(key) + ": '" + std::string(value) + "'");
}

std::string fmt(double v, int digits = 2) { return format_fixed(v, digits); }
std::string fmt_opt(const std::optional<double>& v, int digits = 2) { return v ? fmt(*v, digits) : "--"; }

std::string significance_mark(const std::optional<PairedTest>& t) {
  if (!t) return "";
  if (t->bootstrap_p_value < 0.01) return "**";
  if (t->bootstrap_p_value < 0.05) return "*";
  return "";
}

std::string report_header(const World& world, std::string_view title) {
  std::string out = "# " + std::string(title) + "\n\n";
  out += "config hash: " + world.config.hash() + "; world: " + std::string(world_name(world.config.world)) +
         "; seed: " + std::to_string(world.config.seed) + "; dialogues: " + std::to_string(world.eval_scripts.size()) +
         "; drawer members: " + std::to_string(world.drawer->size()) + "\n\n";
  if (world.config.world == WorldMode::kReplay) out += std::string(kReplayConfound) + "\n\n";
  return out;
}

ExperimentReport new_report(const World& world, std::string name) {
  ExperimentReport r;
  r.name = std::move(name);
  r.config_hash = world.config.hash();
  r.files[r.name + ".config"] = world.config.to_text() + "# hash " + r.config_hash + "\n";
  return r;
}

}  // namespace

// ---- Configuration.

void ExperimentConfig::validate() const {
  if (ensemble_seeds.empty()) throw Error("ensemble_seeds must not be empty");
  if (training.epochs < 1 || training.batch_size < 1) throw Error("epochs and batch_size must be >= 1");
  if (!(training.learning_rate > 0.0)) throw Error("learning_rate must be > 0");
  if (world == WorldMode::kSynthetic && (train_dialogues < 1 || eval_dialogues < 1)) {
    throw Error("synthetic world needs train_dialogues and eval_dialogues >= 1");
  }
  if (world == WorldMode::kReplay && corpus_path.empty()) throw Error("replay world needs corpus_path");
  if (thetas.empty()) throw Error("thetas must not be empty");
  for (double t : thetas) {
    if (!(t >= 0.0)) throw Error("thetas must be >= 0");
  }
  if (policies.empty()) throw Error("policies must not be empty");
  if (calibration_bins < 1 || bootstrap_resamples < 1) throw Error("invalid calibration settings");
  human.instruction.validate();
  for (const auto& path : {corpus_path, annotations_path, split_path, drawer_weights, decider_weights}) {
    if (!path.empty() && !std::filesystem::exists(path)) throw Error("path does not exist: " + path);
  }
  if (!checkpoint_dir.empty() && !std::filesystem::is_directory(checkpoint_dir)) {
    throw Error("checkpoint_dir does not exist: " + checkpoint_dir);
  }
}

std::string ExperimentConfig::to_text() const {
  std::map<std::string, std::string> kv;
  auto dbl = [](double v) { return format_double(v); };
  auto num = [](int v) { return std::to_string(v); };
  kv["experiment"] = experiment;
  kv["world"] = world_name(world);
  kv["seed"] = std::to_string(seed);
  kv["ensemble_seeds"] = join_list(ensemble_seeds, num);
  kv["epochs"] = num(training.epochs);
  kv["learning_rate"] = dbl(training.learning_rate);
  kv["momentum"] = dbl(training.momentum);
  kv["batch_size"] = num(training.batch_size);
  kv["init_scale"] = dbl(training.init_scale);
  kv["train_dialogues"] = num(train_dialogues);
  kv["eval_dialogues"] = num(eval_dialogues);
  kv["study_dialogues"] = num(study_dialogues);
  kv["omit_size_p"] = dbl(human.instruction.omit_size_p);
  kv["omit_flip_p"] = dbl(human.instruction.omit_flip_p);
  kv["cliparts_per_turn_min"] = num(human.instruction.min_cliparts_per_turn);
  kv["cliparts_per_turn_max"] = num(human.instruction.max_cliparts_per_turn);
  kv["ask_p"] = dbl(human.ask_p);
  kv["scene_min_cliparts"] = num(human.scene.min_cliparts);
  kv["scene_max_cliparts"] = num(human.scene.max_cliparts);
  kv["scene_person_fraction"] = human.scene.person_fraction ? dbl(*human.scene.person_fraction) : "";
  kv["policies"] = join(policies, ",");
  kv["thetas"] = join_list(thetas, dbl);
  kv["sweep_thetas"] = join_list(sweep_thetas, dbl);
  kv["sweep_rates"] = join_list(sweep_rates, dbl);
  kv["calibration_theta"] = dbl(calibration_theta);
  kv["calibration_bins"] = num(calibration_bins);
  kv["selection_mode"] = selection_name(selection_mode);
  kv["bootstrap_resamples"] = num(bootstrap_resamples);
  kv["study_epochs"] = join_list(study_epochs, num);
  kv["study_labels"] = to_string(study_labels);
  kv["study_label_noise"] = dbl(study_label_noise);
  kv["study_permutations"] = num(study_permutations);
  kv["study_bootstraps"] = num(study_bootstraps);
  kv["l2_lambda"] = dbl(l2_lambda);
  kv["output_dir"] = output_dir;
  kv["write_transcripts"] = write_transcripts ? "true" : "false";
  kv["corpus_path"] = corpus_path;
  kv["corpus_format"] = format_name(corpus_format);
  kv["annotations_path"] = annotations_path;
  kv["split_path"] = split_path;
  kv["drawer_weights"] = drawer_weights;
  kv["checkpoint_dir"] = checkpoint_dir;
  kv["decider_weights"] = decider_weights;
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  ExperimentConfig copy = *this;
  copy.output_dir.clear();
  copy.write_transcripts = true;
  return hex64(fnv1a64(copy.to_text()));
}

void ExperimentConfig::set(std::string_view key_view, std::string_view value) {
  const std::string key(key_view);
  auto i32 = [&] { return static_cast<int>(parse_int(value, key)); };
  auto f64 = [&] { return parse_double(value, key); };
  if (key == "experiment") {
    experiment = std::string(value);
  } else if (key == "world") {
    if (value == "synthetic") {
      world = WorldMode::kSynthetic;
    } else if (value == "replay") {
      world = WorldMode::kReplay;
    } else {
      throw Error("world must be synthetic or replay");
    }
  } else if (key == "seed") {
    seed = static_cast<uint64_t>(parse_int(value, key));
  } else if (key == "ensemble_seeds") {
    ensemble_seeds = parse_int_list(value, key);
  } else if (key == "epochs") {
    training.epochs = i32();
  } else if (key == "learning_rate") {
    training.learning_rate = f64();
  } else if (key == "momentum") {
    training.momentum = f64();
  } else if (key == "batch_size") {
    training.batch_size = i32();
  } else if (key == "init_scale") {
    training.init_scale = f64();
  } else if (key == "train_dialogues") {
    train_dialogues = i32();
  } else if (key == "eval_dialogues") {
    eval_dialogues = i32();
  } else if (key == "study_dialogues") {
    study_dialogues = i32();
  } else if (key == "omit_size_p") {
    human.instruction.omit_size_p = f64();
  } else if (key == "omit_flip_p") {
    human.instruction.omit_flip_p = f64();
  } else if (key == "cliparts_per_turn_min") {
    human.instruction.min_cliparts_per_turn = i32();
  } else if (key == "cliparts_per_turn_max") {
    human.instruction.max_cliparts_per_turn = i32();
  } else if (key == "ask_p") {
    human.ask_p = f64();
  } else if (key == "scene_min_cliparts") {
    human.scene.min_cliparts = i32();
  } else if (key == "scene_max_cliparts") {
    human.scene.max_cliparts = i32();
  } else if (key == "scene_person_fraction") {
    human.scene.person_fraction = value.empty() ? std::nullopt : std::optional<double>(f64());
  } else if (key == "policies") {
    policies = parse_list(value);
  } else if (key == "thetas") {
    thetas = parse_double_list(value, key);
  } else if (key == "sweep_thetas") {
    sweep_thetas = parse_double_list(value, key);
  } else if (key == "sweep_rates") {
    sweep_rates = parse_double_list(value, key);
  } else if (key == "calibration_theta") {
    calibration_theta = f64();
  } else if (key == "calibration_bins") {
    calibration_bins = i32();
  } else if (key == "selection_mode") {
    if (value == "raw") {
      selection_mode = SelectionMode::kRaw;
    } else if (value == "normalized") {
      selection_mode = SelectionMode::kNormalized;
    } else {
      throw Error("selection_mode must be raw or normalized");
    }
  } else if (key == "bootstrap_resamples") {
    bootstrap_resamples = i32();
  } else if (key == "study_epochs") {
    study_epochs = parse_int_list(value, key);
  } else if (key == "study_labels") {
    study_labels = parse_study_label_mode(value);
  } else if (key == "study_label_noise") {
    study_label_noise = f64();
  } else if (key == "study_permutations") {
    study_permutations = i32();
  } else if (key == "study_bootstraps") {
    study_bootstraps = i32();
  } else if (key == "l2_lambda") {
    l2_lambda = f64();
  } else if (key == "output_dir") {
    output_dir = std::string(value);
  } else if (key == "write_transcripts") {
    write_transcripts = parse_bool(value, key);
  } else if (key == "corpus_path") {
    corpus_path = std::string(value);
  } else if (key == "corpus_format") {
    corpus_format = parse_corpus_format(value);
  } else if (key == "annotations_path") {
    annotations_path = std::string(value);
  } else if (key == "split_path") {
    split_path = std::string(value);
  } else if (key == "drawer_weights") {
    drawer_weights = std::string(value);
  } else if (key == "checkpoint_dir") {
    checkpoint_dir = std::string(value);
  } else if (key == "decider_weights") {
    decider_weights = std::string(value);
  } else {
    throw Error("unknown config key '" + key + "'");
  }
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig config;
  int line_no = 0;
  for (auto raw : split_lines(text)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) { return ExperimentConfig::parse(read_file(path)); }

// ---- World.

namespace {

std::vector<DeciderTurn> decider_turns(const std::vector<CorpusDialogue>& corpus, const AnnotationJoin& join) {
  std::vector<DeciderTurn> out;
  static const Scene kEmpty;
  for (const auto& d : corpus) {
    std::string previous;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      out.push_back({drawer_input_text(previous, d.turns[t].teller_text), t == 0 ? kEmpty : d.turns[t - 1].canvas_after,
                     join.is_cq(d.dialogue_id, static_cast<int>(t))});
      previous = d.turns[t].drawer_text;
    }
  }
  return out;
}

}  // namespace

std::string checkpoint_file(const std::string& dir, int seed, int epoch) {
  return dir + "/seed" + std::to_string(seed) + "_epoch" + std::to_string(epoch) + ".json";
}

std::vector<std::string> save_world(const World& world, const std::string& dir) {
  std::filesystem::create_directories(dir + "/checkpoints");
  std::vector<std::string> written;
  auto put = [&](const std::string& path, const std::string& bytes) {
    write_file(path, bytes);
    written.push_back(path);
  };
  put(dir + "/drawer.json", save_ensemble(*world.drawer));
  for (const auto& [key, params] : world.checkpoints.params) {
    put(checkpoint_file(dir + "/checkpoints", key.first, key.second), save_params(params));
  }
  if (world.decider) put(dir + "/decider.json", save_decider(*world.decider));
  put(dir + "/train.config", world.config.to_text());
  return written;
}

std::string transcripts_jsonl(const std::vector<DialogueTranscript>& transcripts) {
  std::string out;
  for (const auto& t : transcripts) out += transcript_to_jsonl(t);
  return out;
}

World prepare_world(const ExperimentConfig& config, Execution execution) {
  config.validate();
  World w;
  w.config = config;
  w.gallery = &default_gallery();
  const Gallery& g = *w.gallery;

  std::vector<CorpusDialogue> test_corpus;
  std::vector<AnnotationRecord> all_annotations;
  if (config.world == WorldMode::kSynthetic) {
    SyntheticCorpus train = synthetic_corpus(g, config.train_dialogues, derive_seed(config.seed, 1), config.human,
                                             "train");
    w.train_corpus = std::move(train.dialogues);
    w.train_annotations = std::move(train.annotations);
    SyntheticCorpus study = synthetic_corpus(g, config.study_dialogues, derive_seed(config.seed, 3), config.human,
                                             "study");
    w.study_corpus = std::move(study.dialogues);
    w.study_annotations = std::move(study.annotations);
    w.has_study_annotations = true;
    const uint64_t scene_seed = derive_seed(config.seed, 2);
    const uint64_t script_seed = derive_seed(config.seed, 5);
    for (int i = 0; i < config.eval_dialogues; ++i) {
      const auto idx = static_cast<uint64_t>(i);
      Scene target = random_scene(g, derive_seed(scene_seed, idx), config.human.scene);
      w.eval_scripts.push_back(TellerScript::synthetic(g, "eval_" + std::to_string(i), target,
                                                       config.human.instruction, derive_seed(script_seed, idx)));
    }
    w.human_positions = synthetic_human_positions(w.eval_scripts, config.human.ask_p, derive_seed(config.seed, 4));
  } else {
    const auto corpus = parse_codraw(g, read_file(config.corpus_path), config.corpus_format);
    const CorpusSplit split = config.split_path.empty() ? split_corpus(corpus, config.seed)
                                                        : split_from_file(corpus, read_file(config.split_path));
    w.train_corpus = select_dialogues(corpus, split.train);
    test_corpus = select_dialogues(corpus, split.test);
    for (const auto& d : test_corpus) w.eval_scripts.push_back(TellerScript::from_corpus(d));
    w.study_corpus = test_corpus;
    if (!config.annotations_path.empty()) {
      all_annotations = parse_icr(read_file(config.annotations_path));
      const AnnotationJoin test_join = join_annotations(test_corpus, all_annotations);
      for (const auto& [key, rec] : test_join.records) {
        if (rec.is_cq) w.human_positions.insert(key);
      }
      w.train_annotations = all_annotations;
      w.study_annotations = all_annotations;
      w.has_study_annotations = true;
    }
  }

  if (!config.drawer_weights.empty()) {
    w.drawer = std::make_shared<const Ensemble>(load_ensemble(read_file(config.drawer_weights), g));
    if (!config.checkpoint_dir.empty()) {
      for (int s : config.ensemble_seeds) {
        for (int e : config.study_epochs) {
          const std::string path = checkpoint_file(config.checkpoint_dir, s, e);
          if (std::filesystem::exists(path)) w.checkpoints.params[{s, e}] = load_params(read_file(path), g);
        }
      }
    }
  } else {
    if (w.train_corpus.empty()) throw Error("no training dialogues");
    const auto turns = training_turns(w.train_corpus, g.size());
    std::vector<std::string> texts;
    for (const auto& t : turns) texts.push_back(t.input_text);
    const Vocabulary vocab = Vocabulary::build(texts, g);
    std::vector<uint64_t> seeds(config.ensemble_seeds.begin(), config.ensemble_seeds.end());
    const std::set<int> keep(config.study_epochs.begin(), config.study_epochs.end());
    // Members may train on different threads; each writes only its own slots.
    std::vector<std::map<int, DrawerParams>> snapshots(seeds.size());
    Ensemble ensemble = train_ensemble(g, vocab, turns, config.training, seeds, execution,
                                       [&](std::size_t m, int epoch, const DrawerParams& p) {
                                         if (keep.count(epoch)) snapshots[m][epoch] = p;
                                       });
    for (std::size_t m = 0; m < seeds.size(); ++m) {
      for (auto& [epoch, p] : snapshots[m]) w.checkpoints.params[{config.ensemble_seeds[m], epoch}] = std::move(p);
    }
    w.drawer = std::make_shared<const Ensemble>(std::move(ensemble));
  }

  if (!config.decider_weights.empty()) {
    w.decider = std::make_shared<const DeciderParams>(load_decider(read_file(config.decider_weights)));
  } else if (!w.train_annotations.empty()) {
    const AnnotationJoin join = join_annotations(w.train_corpus, w.train_annotations);
    const auto turns = decider_turns(w.train_corpus, join);
    DeciderConfig dc;
    dc.seed = config.seed;
    w.decider = std::make_shared<const DeciderParams>(train_decider(w.drawer->front(), turns, dc));
  }
  return w;
}

ClarificationPolicy make_policy(const World& world, std::string_view spec) {
  if (spec == "decider") {
    if (!world.decider) throw Error("decider policy needs annotations or decider_weights");
    return ClarificationPolicy::with_decider(*world.decider);
  }
  if (spec == "human" && world.human_positions.empty() && world.config.world == WorldMode::kReplay &&
      world.config.annotations_path.empty()) {
    throw Error("human policy needs annotations");
  }
  return parse_policy(spec, world.human_positions);
}

PolicyRun run_policy(const World& world, std::string_view policy_spec, Execution execution) {
  DialogueConfig dc;
  dc.selection_mode = world.config.selection_mode;
  dc.policy_seed = derive_seed(world.config.seed, 6);
  PolicyRun run;
  run.policy = std::string(policy_spec);
  run.transcripts =
      run_batch(*world.gallery, world.eval_scripts, world.drawer, make_policy(world, policy_spec), dc, execution);
  return run;
}

DialogueScore score_dialogue(const Gallery& gallery, const DialogueTranscript& t) {
  DialogueScore s;
  for (const auto& [id, p] : t.target_scene.placements) {
    if (const Placement* d = t.final_scene.find(id)) {
      ++s.size_pairs;
      s.size_matches += d->size == p.size;
    }
  }
  s.similarity = similarity_v2(gallery, t.target_scene, t.final_scene).total;
  s.cqs = t.cq_count();
  return s;
}

RunSummary summarize(std::span<const DialogueScore> scores) {
  RunSummary r;
  r.dialogues = static_cast<int>(scores.size());
  if (scores.empty()) return r;
  int matches = 0, pairs = 0, cqs = 0, with = 0;
  double ss = 0.0;
  for (const auto& s : scores) {
    matches += s.size_matches;
    pairs += s.size_pairs;
    ss += s.similarity;
    cqs += s.cqs;
    with += s.cqs > 0;
  }
  const double n = static_cast<double>(scores.size());
  r.size_accuracy = pairs ? 100.0 * matches / pairs : 0.0;
  r.similarity = ss / n;
  r.pct_with_cq = 100.0 * with / n;
  r.cqs_per_dialogue = cqs / n;
  if (with > 0) r.cqs_per_cq_dialogue = static_cast<double>(cqs) / with;
  return r;
}

PairedTest paired_test(std::span<const double> deltas, int resamples, uint64_t seed) {
  PairedTest t;
  t.n = static_cast<int>(deltas.size());
  if (deltas.empty()) return t;
  const double n = static_cast<double>(deltas.size());
  t.mean_delta = std::accumulate(deltas.begin(), deltas.end(), 0.0) / n;
  if (deltas.size() >= 2) {
    double var = 0.0;
    for (double d : deltas) var += (d - t.mean_delta) * (d - t.mean_delta);
    var /= n - 1.0;
    if (var > 0.0) {
      t.t_statistic = t.mean_delta / std::sqrt(var / n);
      boost::math::students_t dist(n - 1.0);
      t.t_p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t.t_statistic)));
    } else {
      t.t_p_value = t.mean_delta == 0.0 ? 1.0 : 0.0;
    }
  }
  Rng rng = make_rng(seed);
  int le = 0, ge = 0;
  for (int r = 0; r < resamples; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < deltas.size(); ++i) sum += deltas[uniform_index(rng, deltas.size())];
    const double mean = sum / n;
    le += mean <= 0.0;
    ge += mean >= 0.0;
  }
  t.bootstrap_p_value = std::min(1.0, 2.0 * std::min(le, ge) / static_cast<double>(resamples));
  return t;
}

void write_report(const ExperimentReport& report, const std::string& dir) {
  for (const auto& [name, contents] : report.files) write_file(dir + "/" + name, contents);
}

// ---- Table 1.

const Table1Row& Table1::row(std::string_view policy) const {
  for (const auto& r : rows) {
    if (r.policy == policy) return r;
  }
  throw Error("no table row for policy '" + std::string(policy) + "'");
}

namespace {

std::vector<DialogueScore> score_run(const Gallery& gallery, const std::vector<DialogueTranscript>& transcripts) {
  std::vector<DialogueScore> out;
  out.reserve(transcripts.size());
  for (const auto& t : transcripts) out.push_back(score_dialogue(gallery, t));
  return out;
}

std::string policy_file_name(std::string policy) {
  for (char& c : policy) {
    if (c == ':' || c == '.' || c == '/') c = '_';
  }
  return policy;
}


struct Table1Runs {
  Table1 table;
  std::map<std::string, std::vector<DialogueTranscript>> transcripts;
};

Table1Runs table1_runs(const World& world, Execution execution) {
  const Gallery& g = *world.gallery;
  Table1Runs out;
  const PolicyRun silent = run_policy(world, "silent", execution);
  const auto silent_scores = score_run(g, silent.transcripts);
  for (std::size_t pi = 0; pi < world.config.policies.size(); ++pi) {
    const std::string& spec = world.config.policies[pi];
    // The silent run is its own counterfactual; reuse it.
    const PolicyRun run = spec == "silent" ? silent : run_policy(world, spec, execution);
    const auto scores = score_run(g, run.transcripts);
    Table1Row row;
    row.policy = spec;
    row.summary = summarize(scores);
    std::vector<DialogueScore> asked, counterfactual;
    std::vector<double> ss_deltas, acc_deltas;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i].cqs == 0) continue;
      asked.push_back(scores[i]);
      counterfactual.push_back(silent_scores[i]);
      ss_deltas.push_back(scores[i].similarity - silent_scores[i].similarity);
      const double a = scores[i].size_pairs ? 100.0 * scores[i].size_matches / scores[i].size_pairs : 0.0;
      const double b =
          silent_scores[i].size_pairs ? 100.0 * silent_scores[i].size_matches / silent_scores[i].size_pairs : 0.0;
      acc_deltas.push_back(a - b);
    }
    row.cq_dialogues = static_cast<int>(asked.size());
    if (!asked.empty()) {
      row.size_accuracy_boost = summarize(asked).size_accuracy - summarize(counterfactual).size_accuracy;
      row.similarity_boost = summarize(asked).similarity - summarize(counterfactual).similarity;
      const uint64_t test_seed = derive_seed(world.config.seed, 0x7e57 + pi);
      row.similarity_test = paired_test(ss_deltas, world.config.bootstrap_resamples, test_seed);
      row.size_accuracy_test = paired_test(acc_deltas, world.config.bootstrap_resamples, derive_seed(test_seed, 1));
    }
    out.table.rows.push_back(std::move(row));
    out.transcripts[spec] = run.transcripts;
  }
  return out;
}

}  // namespace

Table1 exp_table1(const World& world, Execution execution) { return table1_runs(world, execution).table; }

ExperimentReport table1_report(const World& world, const Table1& table) {
  ExperimentReport r = new_report(world, "table1");
  std::vector<std::vector<std::string>> csv, md;
  for (const auto& row : table.rows) {
    const auto& s = row.summary;
    csv.push_back({row.policy, fmt(s.size_accuracy), fmt(s.similarity, 3), std::to_string(row.cq_dialogues),
                   fmt_opt(row.size_accuracy_boost), fmt_opt(row.similarity_boost, 3),
                   row.similarity_test ? fmt(row.similarity_test->t_p_value, 4) : "--",
                   row.similarity_test ? fmt(row.similarity_test->bootstrap_p_value, 4) : "--",
                   row.size_accuracy_test ? fmt(row.size_accuracy_test->bootstrap_p_value, 4) : "--"});
    md.push_back({row.policy, fmt(s.size_accuracy), fmt(s.similarity, 3),
                  fmt_opt(row.size_accuracy_boost) + significance_mark(row.size_accuracy_test),
                  fmt_opt(row.similarity_boost, 3) + significance_mark(row.similarity_test)});
  }
  r.files["table1.csv"] =
      csv_table({"policy", "size_accuracy", "ss", "cq_dialogues", "size_accuracy_boost", "ss_boost", "ss_boost_t_p",
                 "ss_boost_bootstrap_p", "size_accuracy_boost_bootstrap_p"},
                csv);
  r.files["table1.md"] = report_header(world, "Size accuracy, similarity and CQ boost") +
                         markdown_table({"Policy", "Size Acc.", "SS", "CQs Size Acc. boost", "CQs SS boost"}, md) +
                         "\nBoost columns: run minus its silent counterfactual on dialogues with at least one "
                         "question. * p < 0.05, ** p < 0.01 (paired bootstrap, " +
                         std::to_string(world.config.bootstrap_resamples) +
                         " resamples); paired t-test p-values are in the CSV.\n";
  return r;
}

// ---- Table 2.

std::vector<Table2Row> exp_table2(const World& world, Execution execution) {
  std::vector<Table2Row> rows;
  for (double theta : world.config.thetas) {
    const PolicyRun run = run_policy(world, "threshold:" + format_double(theta), execution);
    const auto scores = score_run(*world.gallery, run.transcripts);
    rows.push_back({theta, summarize(scores)});
  }
  return rows;
}

ExperimentReport table2_report(const World& world, const std::vector<Table2Row>& rows) {
  ExperimentReport r = new_report(world, "table2");
  std::vector<std::vector<std::string>> csv, md;
  for (const auto& row : rows) {
    const auto& s = row.summary;
    csv.push_back({format_double(row.theta), fmt(s.pct_with_cq), fmt_opt(s.cqs_per_cq_dialogue),
                   fmt(s.cqs_per_dialogue), fmt(s.size_accuracy), fmt(s.similarity, 3)});
    md.push_back({format_double(row.theta), fmt(s.pct_with_cq), s.cqs_per_cq_dialogue ? fmt(*s.cqs_per_cq_dialogue) : "—"});
  }
  r.files["table2.csv"] = csv_table(
      {"theta", "pct_dialogues_with_cq", "cqs_per_cq_dialogue", "cqs_per_dialogue", "size_accuracy", "ss"}, csv);
  r.files["table2.md"] = report_header(world, "Questions per threshold") +
                         markdown_table({"θ", "% dialogues with CQ", "CQs per CQ-dialogue"}, md);
  return r;
}

// ---- Figure 4.

std::vector<CurvePoint> exp_figure4(const World& world, Execution execution) {
  std::vector<CurvePoint> points;
  auto add = [&](std::string policy, double parameter, const std::string& spec) {
    const PolicyRun run = run_policy(world, spec, execution);
    const RunSummary s = summarize(score_run(*world.gallery, run.transcripts));
    points.push_back({std::move(policy), parameter, s.cqs_per_dialogue, s.size_accuracy, s.similarity});
  };
  for (double t : world.config.sweep_thetas) add("threshold", t, "threshold:" + format_double(t));
  for (double p : world.config.sweep_rates) add("random", p, "random:" + format_double(p));
  if (world.decider) add("decider", 0.5, "decider");
  if (!world.human_positions.empty()) add("human", 0.0, "human");
  return points;
}

std::vector<BudgetMatch> match_budgets(const std::vector<CurvePoint>& points, double tolerance) {
  std::vector<BudgetMatch> out;
  for (const auto& p : points) {
    if (p.policy != "random") continue;
    BudgetMatch m;
    m.random = p;
    for (const auto& q : points) {
      if (q.policy != "threshold" || std::abs(q.budget - p.budget) > tolerance) continue;
      if (!m.threshold || std::abs(q.budget - p.budget) < std::abs(m.threshold->budget - p.budget)) m.threshold = q;
    }
    out.push_back(std::move(m));
  }
  return out;
}

ExperimentReport figure4_report(const World& world, const std::vector<CurvePoint>& points) {
  ExperimentReport r = new_report(world, "figure4");
  std::vector<std::vector<std::string>> csv;
  for (const auto& p : points) {
    csv.push_back({p.policy, format_double(p.parameter), fmt(p.budget, 3), fmt(p.size_accuracy), fmt(p.similarity, 3)});
  }
  r.files["figure4.csv"] = csv_table({"policy", "parameter", "budget", "size_accuracy", "ss"}, csv);
  std::vector<std::vector<std::string>> md;
  for (const auto& m : match_budgets(points, 0.2)) {
    md.push_back({fmt(m.random.parameter, 2), fmt(m.random.budget, 3), fmt(m.random.size_accuracy),
                  m.threshold ? format_double(m.threshold->parameter) : "--",
                  m.threshold ? fmt(m.threshold->budget, 3) : "--", m.threshold ? fmt(m.threshold->size_accuracy) : "--"});
  }
  r.files["figure4.md"] = report_header(world, "Questions per dialogue against size accuracy") +
                          "Random points against the closest threshold point within 0.2 questions per dialogue.\n\n" +
                          markdown_table({"random rate", "budget", "size acc.", "θ", "budget", "size acc."}, md);
  return r;
}

// ---- Calibration.

CalibrationResult calibration_between(const Gallery& gallery, std::span<const DialogueTranscript> silent,
                                      std::span<const DialogueTranscript> asked, int bins, int resamples,
                                      uint64_t seed) {
  (void)gallery;
  if (silent.size() != asked.size()) throw Error("calibration runs are not paired");
  // Rows grouped per dialogue for the paired bootstrap.
  std::vector<std::vector<CalibrationRow>> rows_s(silent.size()), rows_q(silent.size());
  for (std::size_t i = 0; i < silent.size(); ++i) {
    const auto& a = silent[i];
    const auto& b = asked[i];
    if (a.dialogue_id != b.dialogue_id) throw Error("calibration runs are not paired");
    for (const auto& [id, p] : a.target_scene.placements) {
      if (!a.final_scene.contains(id) || !b.final_scene.contains(id)) continue;
      const int label = static_cast<int>(p.size);
      const auto& da = a.size_beliefs.at(id);
      const auto& db = b.size_beliefs.at(id);
      rows_s[i].push_back({{da.begin(), da.end()}, label});
      rows_q[i].push_back({{db.begin(), db.end()}, label});
    }
  }
  auto flatten = [](const std::vector<std::vector<CalibrationRow>>& groups, const std::vector<std::size_t>& pick) {
    std::vector<CalibrationRow> flat;
    for (std::size_t i : pick) flat.insert(flat.end(), groups[i].begin(), groups[i].end());
    return flat;
  };
  std::vector<std::size_t> all(silent.size());
  std::iota(all.begin(), all.end(), 0);
  CalibrationResult r;
  const auto fs = flatten(rows_s, all), fq = flatten(rows_q, all);
  r.rows = static_cast<int>(fs.size());
  if (fs.empty()) return r;
  r.ece_silent = ece(fs, bins);
  r.ece_cq = ece(fq, bins);
  r.brier_silent = brier(fs);
  r.brier_cq = brier(fq);
  Rng rng = make_rng(seed);
  int ece_le = 0, ece_ge = 0, brier_le = 0, brier_ge = 0, used = 0;
  std::vector<std::size_t> pick(silent.size());
  for (int k = 0; k < resamples; ++k) {
    for (auto& p : pick) p = uniform_index(rng, silent.size());
    const auto s = flatten(rows_s, pick), q = flatten(rows_q, pick);
    if (s.empty()) continue;
    ++used;
    const double de = ece(q, bins) - ece(s, bins);
    const double db = brier(q) - brier(s);
    ece_le += de <= 0.0;
    ece_ge += de >= 0.0;
    brier_le += db <= 0.0;
    brier_ge += db >= 0.0;
  }
  if (used > 0) {
    r.ece_p_value = std::min(1.0, 2.0 * std::min(ece_le, ece_ge) / static_cast<double>(used));
    r.brier_p_value = std::min(1.0, 2.0 * std::min(brier_le, brier_ge) / static_cast<double>(used));
  }
  return r;
}

CalibrationResult exp_calibration(const World& world, Execution execution) {
  const PolicyRun silent = run_policy(world, "silent", execution);
  const double theta = world.config.calibration_theta;
  const PolicyRun asked = run_policy(world, "threshold:" + format_double(theta), execution);
  CalibrationResult r =
      calibration_between(*world.gallery, silent.transcripts, asked.transcripts, world.config.calibration_bins,
                          world.config.bootstrap_resamples, derive_seed(world.config.seed, 0xca1));
  r.theta = theta;
  return r;
}

ExperimentReport calibration_report(const World& world, const CalibrationResult& c) {
  ExperimentReport r = new_report(world, "calibration");
  r.files["calibration.csv"] = csv_table(
      {"theta", "rows", "ece_silent", "ece_cq", "ece_p", "brier_silent", "brier_cq", "brier_p"},
      {{format_double(c.theta), std::to_string(c.rows), fmt(c.ece_silent, 4), fmt(c.ece_cq, 4), fmt(c.ece_p_value, 4),
        fmt(c.brier_silent, 4), fmt(c.brier_cq, 4), fmt(c.brier_p_value, 4)}});
  r.files["calibration.md"] =
      report_header(world, "Size calibration with and without questions") +
      markdown_table({"", "Silent", "θ=" + format_double(c.theta), "p (paired bootstrap)"},
                     {{"ECE", fmt(c.ece_silent, 4), fmt(c.ece_cq, 4), fmt(c.ece_p_value, 4)},
                      {"Brier", fmt(c.brier_silent, 4), fmt(c.brier_cq, 4), fmt(c.brier_p_value, 4)}}) +
      "\nRows: " + std::to_string(c.rows) +
      " cliparts present in the target and in both final scenes, using the size distribution behind each "
      "run's last write; " +
      std::to_string(world.config.calibration_bins) + " equal-width bins.\n";
  return r;
}

// ---- Study.

StudyReport exp_study(const World& world, Execution execution) {
  const auto& cfg = world.config;
  if (cfg.study_labels == StudyLabelMode::kAnnotations && !world.has_study_annotations) {
    throw Error("missing annotations for the study");
  }
  StudyConfig sc;
  sc.seeds = cfg.ensemble_seeds;
  sc.epochs = cfg.study_epochs;
  sc.seed = cfg.seed;
  sc.logistic.l2_lambda = cfg.l2_lambda;
  sc.permutation_resamples = cfg.study_permutations;
  sc.bootstrap_resamples = cfg.study_bootstraps;
  sc.label_mode = cfg.study_labels;
  sc.label_noise = cfg.study_label_noise;
  const AnnotationJoin join = join_annotations(world.study_corpus, world.study_annotations);
  return study_grid(*world.gallery, world.study_corpus, world.checkpoints, &join, sc, execution);
}

ExperimentReport study_report(const World& world, const StudyReport& study) {
  ExperimentReport r = new_report(world, "study");
  r.files["study_cells.csv"] = study_cells_csv(study);
  r.files["study_coefficients.csv"] = study_coefficients_csv(study);
  // Per-epoch means over seeds.
  std::vector<std::vector<std::string>> series;
  for (int e : study.config.epochs) {
    double ap = 0, base = 0, ss = 0;
    std::array<double, kStudyFeatures> f{};
    for (int s : study.config.seeds) {
      const auto& c = study.cell(s, e);
      ap += c.ap;
      base += c.permutation.baseline;
      ss += c.similarity;
      for (int j = 0; j < kStudyFeatures; ++j) f[j] += c.mean_features[j];
    }
    const double n = static_cast<double>(study.config.seeds.size());
    series.push_back({std::to_string(e), fmt(ap / n, 4), fmt(base / n, 4), fmt(ss / n, 4), fmt(f[0] / n, 4),
                      fmt(f[1] / n, 4), fmt(f[2] / n, 4), fmt(f[3] / n, 4)});
  }
  r.files["study_series.csv"] = csv_table(
      {"epoch", "ap", "baseline_ap", "ss", "u_select", "h_size", "h_flip", "u_position"}, series);
  r.files["study.md"] = report_header(world, "Model uncertainty against human questions") + study_markdown(study);
  return r;
}

ExperimentReport run_experiment(const World& world, std::string_view name, Execution execution) {
  if (name == "table1") {
    Table1Runs runs = table1_runs(world, execution);
    ExperimentReport r = table1_report(world, runs.table);
    if (world.config.write_transcripts) {
      for (const auto& [policy, ts] : runs.transcripts) {
        r.files["transcripts/" + policy_file_name(policy) + ".jsonl"] = transcripts_jsonl(ts);
      }
    }
    return r;
  }
  if (name == "table2") return table2_report(world, exp_table2(world, execution));
  if (name == "figure4") return figure4_report(world, exp_figure4(world, execution));
  if (name == "calibration") return calibration_report(world, exp_calibration(world, execution));
  if (name == "study") return study_report(world, exp_study(world, execution));
  if (name == "clusters") {
    if (!world.has_study_annotations) throw Error("missing annotations for the cluster analysis");
    const AnnotationJoin join = join_annotations(world.study_corpus, world.study_annotations);
    const auto rows = cluster_analysis(world.study_corpus, join, Lexicons::defaults(), reference_clusters());
    ExperimentReport r = new_report(world, "clusters");
    r.files["clusters.csv"] = clusters_csv(rows);
    r.files["clusters.md"] = report_header(world, "Keyword clusters of first instructions") + clusters_markdown(rows);
    return r;
  }
  throw Error("unknown experiment '" + std::string(name) + "'");
}

}  // namespace cqdraw
