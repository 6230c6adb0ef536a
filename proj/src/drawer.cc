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

#include "cqdraw/drawer.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

#include "cqdraw/random.h"
#include "cqdraw/text_util.h"

namespace cqdraw {

namespace {

constexpr const char* kTemplateWords[] = {
    "add", "a", "at", "the", "facing", "left", "right", "top", "middle", "bottom", "center",
    "what", "size", "is", "are", "and", "?", "small", "medium", "large", "not", "in", "scene",
    "ok", "."};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

template <std::size_t K>
std::array<double, K> softmax(const double* logits) {
  std::array<double, K> out{};
  double top = logits[0];
  for (std::size_t k = 1; k < K; ++k) top = std::max(top, logits[k]);
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    out[k] = std::exp(logits[k] - top);
    sum += out[k];
  }
  for (auto& v : out) v /= sum;
  return out;
}

struct SparseInput {
  std::vector<int> tokens;
  std::vector<std::pair<int, double>> canvas;  // (index into canvas block, value)
};

struct Activations {
  std::vector<double> text;
  std::vector<double> h1;
  std::vector<double> h2;
  std::vector<double> logits;
};

void check_tokens(const DrawerParams& p, std::span<const int> tokens) {
  for (int t : tokens) {
    if (t < 0 || t >= p.dims.vocab) {
      throw Error("token index " + std::to_string(t) + " outside vocabulary of " +
                  std::to_string(p.dims.vocab));
    }
  }
}

std::vector<std::pair<int, double>> sparse_canvas(int gallery_size, const Scene& scene) {
  std::vector<std::pair<int, double>> out;
  for (const auto& [id, pl] : scene.placements) {
    if (id < 0 || id >= gallery_size) {
      throw Error("canvas clipart " + std::to_string(id) + " outside gallery of " +
                  std::to_string(gallery_size));
    }
    const int base = id * kBlockWidth;
    out.emplace_back(base + kSlotPresent, 1.0);
    out.emplace_back(base + kSlotSize + static_cast<int>(pl.size), 1.0);
    out.emplace_back(base + kSlotFlip + static_cast<int>(pl.flip), 1.0);
    if (pl.x != 0.0) out.emplace_back(base + kSlotX, pl.x);
    if (pl.y != 0.0) out.emplace_back(base + kSlotY, pl.y);
  }
  return out;
}

void forward_pass(const DrawerParams& p, const SparseInput& in, Activations& a) {
  const int E = p.dims.embed;
  const int H = p.dims.hidden;
  const int in_dim = p.dims.input();
  const int out_dim = p.dims.output();
  const auto& emb = p.tensors[kEmbedding];
  const auto& w1 = p.tensors[kW1].values;
  const auto& b1 = p.tensors[kB1].values;
  const auto& w2 = p.tensors[kW2].values;
  const auto& b2 = p.tensors[kB2].values;
  const auto& w3 = p.tensors[kW3].values;
  const auto& b3 = p.tensors[kB3].values;

  a.text.assign(E, 0.0);
  if (!in.tokens.empty()) {
    for (int t : in.tokens) {
      const double* row = &emb.values[static_cast<std::size_t>(t) * E];
      for (int k = 0; k < E; ++k) a.text[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(in.tokens.size());
    for (auto& v : a.text) v *= inv;
  }

  a.h1.resize(H);
  for (int r = 0; r < H; ++r) {
    const double* row = &w1[static_cast<std::size_t>(r) * in_dim];
    double s = b1[r];
    for (int k = 0; k < E; ++k) s += row[k] * a.text[k];
    for (const auto& [idx, v] : in.canvas) s += row[E + idx] * v;
    a.h1[r] = std::tanh(s);
  }
  a.h2.resize(H);
  for (int r = 0; r < H; ++r) {
    const double* row = &w2[static_cast<std::size_t>(r) * H];
    double s = b2[r];
    for (int k = 0; k < H; ++k) s += row[k] * a.h1[k];
    a.h2[r] = std::tanh(s);
  }
  a.logits.resize(out_dim);
  for (int r = 0; r < out_dim; ++r) {
    const double* row = &w3[static_cast<std::size_t>(r) * H];
    double s = b3[r];
    for (int k = 0; k < H; ++k) s += row[k] * a.h2[k];
    a.logits[r] = s;
  }
}

DrawerOutput output_from_logits(int gallery_size, const std::vector<double>& logits) {
  DrawerOutput out;
  out.cliparts.resize(gallery_size);
  for (int c = 0; c < gallery_size; ++c) {
    const double* block = &logits[static_cast<std::size_t>(c) * kBlockWidth];
    ClipartPrediction& pred = out.cliparts[c];
    pred.score = block[kSlotPresent];
    pred.size_dist = softmax<kNumSizes>(block + kSlotSize);
    pred.flip_dist = softmax<kNumFlips>(block + kSlotFlip);
    pred.x = sigmoid(block[kSlotX]);
    pred.y = sigmoid(block[kSlotY]);
  }
  return out;
}

// Loss of one turn from the logits; appends (output row, dL/dlogit) pairs.
double logit_loss(const DrawerParams& p, const std::vector<double>& logits, const TurnTargets& targets,
                  const LossWeights& w, double scale, std::vector<std::pair<int, double>>* grads) {
  const int G = p.dims.gallery;
  double loss = 0.0;
  for (int c = 0; c < G; ++c) {
    const double* block = &logits[static_cast<std::size_t>(c) * kBlockWidth];
    const int base = c * kBlockWidth;
    const ClipartTarget& t = targets.cliparts[c];
    const double z = block[kSlotPresent];
    const double s = t.selected ? 1.0 : 0.0;
    loss += w.select * (softplus(z) - s * z);
    if (grads) grads->emplace_back(base + kSlotPresent, scale * w.select * (sigmoid(z) - s));
    if (!t.selected) continue;

    const auto size_p = softmax<kNumSizes>(block + kSlotSize);
    const int size_t_ = static_cast<int>(t.size);
    loss += -w.size * std::log(std::max(size_p[size_t_], 1e-300));
    if (grads) {
      for (int k = 0; k < kNumSizes; ++k) {
        grads->emplace_back(base + kSlotSize + k, scale * w.size * (size_p[k] - (k == size_t_ ? 1.0 : 0.0)));
      }
    }
    if (!p.symmetric[c]) {
      const auto flip_p = softmax<kNumFlips>(block + kSlotFlip);
      const int flip_t = static_cast<int>(t.flip);
      loss += -w.flip * std::log(std::max(flip_p[flip_t], 1e-300));
      if (grads) {
        for (int k = 0; k < kNumFlips; ++k) {
          grads->emplace_back(base + kSlotFlip + k, scale * w.flip * (flip_p[k] - (k == flip_t ? 1.0 : 0.0)));
        }
      }
    }
    const double px = sigmoid(block[kSlotX]);
    const double py = sigmoid(block[kSlotY]);
    loss += w.position * ((px - t.x) * (px - t.x) + (py - t.y) * (py - t.y));
    if (grads) {
      grads->emplace_back(base + kSlotX, scale * w.position * 2.0 * (px - t.x) * px * (1.0 - px));
      grads->emplace_back(base + kSlotY, scale * w.position * 2.0 * (py - t.y) * py * (1.0 - py));
    }
  }
  return loss;
}

struct Workspace {
  Activations act;
  std::vector<std::pair<int, double>> dlogits;
  std::vector<double> dh2, dh1, dtext;
};

void backward(const DrawerParams& p, const SparseInput& in, Workspace& ws, Gradients& g) {
  const int E = p.dims.embed;
  const int H = p.dims.hidden;
  const int in_dim = p.dims.input();
  const auto& a = ws.act;
  const auto& w1 = p.tensors[kW1].values;
  const auto& w2 = p.tensors[kW2].values;
  const auto& w3 = p.tensors[kW3].values;
  auto& gw1 = g[kW1].values;
  auto& gb1 = g[kB1].values;
  auto& gw2 = g[kW2].values;
  auto& gb2 = g[kB2].values;
  auto& gw3 = g[kW3].values;
  auto& gb3 = g[kB3].values;

  ws.dh2.assign(H, 0.0);
  for (const auto& [row, d] : ws.dlogits) {
    if (d == 0.0) continue;
    double* grow = &gw3[static_cast<std::size_t>(row) * H];
    const double* wrow = &w3[static_cast<std::size_t>(row) * H];
    for (int k = 0; k < H; ++k) {
      grow[k] += d * a.h2[k];
      ws.dh2[k] += d * wrow[k];
    }
    gb3[row] += d;
  }
  // dh2 becomes dz2 in place.
  for (int k = 0; k < H; ++k) ws.dh2[k] *= 1.0 - a.h2[k] * a.h2[k];
  ws.dh1.assign(H, 0.0);
  for (int r = 0; r < H; ++r) {
    const double d = ws.dh2[r];
    if (d == 0.0) continue;
    double* grow = &gw2[static_cast<std::size_t>(r) * H];
    const double* wrow = &w2[static_cast<std::size_t>(r) * H];
    for (int k = 0; k < H; ++k) {
      grow[k] += d * a.h1[k];
      ws.dh1[k] += d * wrow[k];
    }
    gb2[r] += d;
  }
  for (int k = 0; k < H; ++k) ws.dh1[k] *= 1.0 - a.h1[k] * a.h1[k];
  ws.dtext.assign(E, 0.0);
  for (int r = 0; r < H; ++r) {
    const double d = ws.dh1[r];
    if (d == 0.0) continue;
    double* grow = &gw1[static_cast<std::size_t>(r) * in_dim];
    const double* wrow = &w1[static_cast<std::size_t>(r) * in_dim];
    for (int k = 0; k < E; ++k) {
      grow[k] += d * a.text[k];
      ws.dtext[k] += d * wrow[k];
    }
    for (const auto& [idx, v] : in.canvas) grow[E + idx] += d * v;
    gb1[r] += d;
  }
  if (!in.tokens.empty()) {
    const double inv = 1.0 / static_cast<double>(in.tokens.size());
    auto& gemb = g[kEmbedding].values;
    for (int t : in.tokens) {
      double* row = &gemb[static_cast<std::size_t>(t) * E];
      for (int k = 0; k < E; ++k) row[k] += ws.dtext[k] * inv;
    }
  }
}

SparseInput encode_turn(const DrawerParams& p, const TrainingTurn& turn) {
  SparseInput in;
  in.tokens = p.vocab.encode(turn.input_text);
  in.canvas = sparse_canvas(p.dims.gallery, turn.canvas_before);
  if (static_cast<int>(turn.targets.cliparts.size()) != p.dims.gallery) {
    throw Error("training targets do not match gallery size");
  }
  return in;
}

Gradients zero_like(const DrawerParams& p) {
  Gradients g;
  for (int i = 0; i < kNumTensors; ++i) g[i] = Tensor(p.tensors[i].rows, p.tensors[i].cols);
  return g;
}

void zero(Gradients& g) {
  for (auto& t : g) std::fill(t.values.begin(), t.values.end(), 0.0);
}

nlohmann::json tensor_to_json(const Tensor& t) {
  if (t.rows == 1) return t.values;
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < t.rows; ++r) {
    rows.push_back(std::vector<double>(t.values.begin() + static_cast<std::ptrdiff_t>(r) * t.cols,
                                       t.values.begin() + static_cast<std::ptrdiff_t>(r + 1) * t.cols));
  }
  return rows;
}

void tensor_from_json(const nlohmann::json& j, Tensor& t, std::string_view name) {
  const auto mismatch = [&] { return Error("dimension mismatch in tensor '" + std::string(name) + "'"); };
  if (!j.is_array()) throw mismatch();
  if (t.rows == 1) {
    if (static_cast<int>(j.size()) != t.cols) throw mismatch();
    for (int c = 0; c < t.cols; ++c) t.values[c] = j[c].get<double>();
    return;
  }
  if (static_cast<int>(j.size()) != t.rows) throw mismatch();
  for (int r = 0; r < t.rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || static_cast<int>(row.size()) != t.cols) throw mismatch();
    for (int c = 0; c < t.cols; ++c) t.at(r, c) = row[c].get<double>();
  }
}

}  // namespace

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, raw);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_ = {"<pad>", "<unk>"};
  index_ = {{"<pad>", kPadding}, {"<unk>", kUnknown}};
  for (const auto& t : tokens) {
    if (!index_.emplace(t, static_cast<int>(tokens_.size())).second) {
      throw Error("duplicate vocabulary token '" + t + "'");
    }
    tokens_.push_back(t);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts, const Gallery& gallery) {
  std::set<std::string> words;
  for (const auto& text : texts) {
    for (auto& w : tokenize_words(text)) words.insert(std::move(w));
  }
  for (const auto& e : gallery.entries()) {
    for (auto& w : tokenize_words(e.name)) words.insert(std::move(w));
  }
  for (const char* w : kTemplateWords) words.insert(w);
  words.erase("<pad>");
  words.erase("<unk>");
  return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
}

int Vocabulary::index(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& w : tokenize_words(text)) out.push_back(index(w));
  return out;
}

std::string_view tensor_name(int id) {
  static constexpr std::string_view kNames[kNumTensors] = {"embedding", "w1", "b1", "w2",
                                                           "b2",        "w3", "b3"};
  return kNames[id];
}

std::size_t DrawerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.values.size();
  return n;
}

DrawerParams zero_params(const Vocabulary& vocab, const Gallery& gallery) {
  DrawerParams p;
  p.vocab = vocab;
  p.gallery_hash = gallery.hash();
  p.dims.vocab = vocab.size();
  p.dims.gallery = gallery.size();
  for (const auto& e : gallery.entries()) p.symmetric.push_back(e.is_symmetric);
  const int H = p.dims.hidden;
  p.tensors[kEmbedding] = Tensor(p.dims.vocab, p.dims.embed);
  p.tensors[kW1] = Tensor(H, p.dims.input());
  p.tensors[kB1] = Tensor(1, H);
  p.tensors[kW2] = Tensor(H, H);
  p.tensors[kB2] = Tensor(1, H);
  p.tensors[kW3] = Tensor(p.dims.output(), H);
  p.tensors[kB3] = Tensor(1, p.dims.output());
  return p;
}

DrawerParams init_params(const Vocabulary& vocab, const Gallery& gallery, uint64_t seed, double scale) {
  DrawerParams p = zero_params(vocab, gallery);
  p.seed = seed;
  Rng rng = make_rng(derive_seed(seed, 0x1a17));
  for (auto& t : p.tensors) {
    for (auto& v : t.values) v = uniform(rng, -scale, scale);
  }
  return p;
}

std::vector<double> encode_text(const DrawerParams& params, std::span<const int> tokens) {
  check_tokens(params, tokens);
  const int E = params.dims.embed;
  std::vector<double> out(E, 0.0);
  if (tokens.empty()) return out;
  for (int t : tokens) {
    for (int k = 0; k < E; ++k) out[k] += params.tensors[kEmbedding].at(t, k);
  }
  for (auto& v : out) v /= static_cast<double>(tokens.size());
  return out;
}

std::vector<double> encode_canvas(int gallery_size, const Scene& scene) {
  std::vector<double> out(static_cast<std::size_t>(gallery_size) * kBlockWidth, 0.0);
  for (const auto& [idx, v] : sparse_canvas(gallery_size, scene)) out[idx] = v;
  return out;
}

Scene decode_canvas(const Gallery& gallery, std::span<const double> encoding) {
  if (static_cast<int>(encoding.size()) != gallery.size() * kBlockWidth) {
    throw Error("canvas encoding has wrong length");
  }
  Scene scene;
  for (int c = 0; c < gallery.size(); ++c) {
    const double* block = &encoding[static_cast<std::size_t>(c) * kBlockWidth];
    if (block[kSlotPresent] == 0.0) continue;
    Placement p;
    p.clipart = c;
    p.size = static_cast<Size>(std::max_element(block + kSlotSize, block + kSlotSize + kNumSizes) -
                               (block + kSlotSize));
    p.flip = static_cast<Flip>(std::max_element(block + kSlotFlip, block + kSlotFlip + kNumFlips) -
                               (block + kSlotFlip));
    p.x = block[kSlotX];
    p.y = block[kSlotY];
    if (gallery.at(c).is_person) {
      p.expression = 0;
      p.pose = 0;
    }
    scene.placements.emplace(c, p);
  }
  return scene;
}

Size ClipartPrediction::size() const {
  return static_cast<Size>(std::max_element(size_dist.begin(), size_dist.end()) - size_dist.begin());
}

Flip ClipartPrediction::flip() const {
  return static_cast<Flip>(std::max_element(flip_dist.begin(), flip_dist.end()) - flip_dist.begin());
}

std::vector<int> DrawerOutput::selected() const {
  std::vector<int> out;
  for (int c = 0; c < static_cast<int>(cliparts.size()); ++c) {
    if (cliparts[c].selected()) out.push_back(c);
  }
  return out;
}

DrawerOutput forward(const DrawerParams& params, std::string_view input_text, const Scene& canvas) {
  if (static_cast<int>(params.tensors[kW1].cols) != params.dims.input() ||
      params.tensors[kEmbedding].rows != params.vocab.size()) {
    throw Error("drawer parameters have inconsistent dimensions");
  }
  SparseInput in;
  in.tokens = params.vocab.encode(input_text);
  in.canvas = sparse_canvas(params.dims.gallery, canvas);
  Activations a;
  forward_pass(params, in, a);
  return output_from_logits(params.dims.gallery, a.logits);
}

std::string drawer_input_text(std::string_view previous_drawer, std::string_view teller) {
  if (previous_drawer.empty()) return std::string(teller);
  return std::string(previous_drawer) + " " + std::string(teller);
}

TurnTargets targets_from_transition(int gallery_size, const Scene& before, const Scene& after) {
  TurnTargets targets;
  targets.cliparts.resize(gallery_size);
  for (const auto& [id, p] : after.placements) {
    if (id < 0 || id >= gallery_size) throw Error("clipart outside gallery in training data");
    const Placement* prev = before.find(id);
    ClipartTarget& t = targets.cliparts[id];
    t.selected = prev == nullptr || !(*prev == p);
    t.size = p.size;
    t.flip = p.flip;
    t.x = p.x;
    t.y = p.y;
  }
  return targets;
}

std::vector<TrainingTurn> training_turns(const CorpusDialogue& dialogue, int gallery_size) {
  std::vector<TrainingTurn> out;
  Scene canvas;
  std::string previous_drawer;
  for (const auto& turn : dialogue.turns) {
    TrainingTurn t;
    t.input_text = drawer_input_text(previous_drawer, turn.teller_text);
    t.canvas_before = canvas;
    t.targets = targets_from_transition(gallery_size, canvas, turn.canvas_after);
    out.push_back(std::move(t));
    canvas = turn.canvas_after;
    previous_drawer = turn.drawer_text;
  }
  return out;
}

std::vector<TrainingTurn> training_turns(const std::vector<CorpusDialogue>& corpus, int gallery_size) {
  std::vector<TrainingTurn> out;
  for (const auto& d : corpus) {
    auto turns = training_turns(d, gallery_size);
    std::move(turns.begin(), turns.end(), std::back_inserter(out));
  }
  return out;
}

double turn_loss(const DrawerParams& params, const DrawerOutput& output, const TurnTargets& targets,
                 const LossWeights& w) {
  const int G = params.dims.gallery;
  if (static_cast<int>(output.cliparts.size()) != G || static_cast<int>(targets.cliparts.size()) != G) {
    throw Error("turn_loss: output/targets do not match gallery size");
  }
  double loss = 0.0;
  for (int c = 0; c < G; ++c) {
    const auto& o = output.cliparts[c];
    const auto& t = targets.cliparts[c];
    const double s = t.selected ? 1.0 : 0.0;
    loss += w.select * (softplus(o.score) - s * o.score);
    if (!t.selected) continue;
    loss += -w.size * std::log(std::max(o.size_dist[static_cast<int>(t.size)], 1e-300));
    if (!params.symmetric[c]) {
      loss += -w.flip * std::log(std::max(o.flip_dist[static_cast<int>(t.flip)], 1e-300));
    }
    loss += w.position * ((o.x - t.x) * (o.x - t.x) + (o.y - t.y) * (o.y - t.y));
  }
  return loss;
}

double loss_and_gradient(const DrawerParams& params, std::span<const TrainingTurn> batch,
                         const LossWeights& weights, Gradients* grads) {
  if (batch.empty()) return 0.0;
  if (grads) {
    *grads = zero_like(params);
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  Workspace ws;
  double total = 0.0;
  for (const auto& turn : batch) {
    const SparseInput in = encode_turn(params, turn);
    forward_pass(params, in, ws.act);
    ws.dlogits.clear();
    total += logit_loss(params, ws.act.logits, turn.targets, weights, scale, grads ? &ws.dlogits : nullptr);
    if (grads) backward(params, in, ws, *grads);
  }
  return total * scale;
}

TrainResult train(const Gallery& gallery, const Vocabulary& vocab, std::span<const TrainingTurn> turns,
                  const TrainConfig& config, const CheckpointFn& on_epoch) {
  if (turns.empty()) throw Error("train: empty corpus");
  if (config.batch_size < 1 || config.epochs < 0) throw Error("train: invalid batch size or epochs");
  TrainResult result;
  DrawerParams& p = result.params;
  p = init_params(vocab, gallery, config.seed, config.init_scale);

  std::vector<SparseInput> inputs;
  inputs.reserve(turns.size());
  for (const auto& t : turns) inputs.push_back(encode_turn(p, t));

  Gradients grads = zero_like(p);
  Gradients velocity = zero_like(p);
  Workspace ws;
  std::vector<std::size_t> order(turns.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(derive_seed(config.seed, 0x5eed));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      zero(grads);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        forward_pass(p, inputs[idx], ws.act);
        ws.dlogits.clear();
        batch_loss += logit_loss(p, ws.act.logits, turns[idx].targets, config.weights, scale, &ws.dlogits);
        backward(p, inputs[idx], ws, grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw Error("non-finite training loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                    std::to_string(start) + " (lr=" + format_double(config.learning_rate) + ")");
      }
      epoch_loss += batch_loss;
      for (int t = 0; t < kNumTensors; ++t) {
        auto& values = p.tensors[t].values;
        auto& v = velocity[t].values;
        const auto& g = grads[t].values;
        for (std::size_t k = 0; k < values.size(); ++k) {
          v[k] = config.momentum * v[k] + g[k];
          values[k] -= config.learning_rate * v[k];
        }
      }
    }
    p.epochs_trained = epoch;
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(turns.size()));
    if (on_epoch) on_epoch(epoch, p, result.epoch_losses.back());
  }
  return result;
}

Ensemble train_ensemble(const Gallery& gallery, const Vocabulary& vocab, std::span<const TrainingTurn> turns,
                        const TrainConfig& config, const std::vector<uint64_t>& seeds, Execution execution,
                        const std::function<void(std::size_t, int, const DrawerParams&)>& on_epoch) {
  if (seeds.empty()) throw Error("train_ensemble: at least one seed required");
  Ensemble ensemble;
  ensemble.members.resize(seeds.size());
  for_each_index(execution, seeds.size(), [&](std::size_t i) {
    TrainConfig member_config = config;
    member_config.seed = seeds[i];
    CheckpointFn hook;
    if (on_epoch) hook = [&, i](int epoch, const DrawerParams& params, double) { on_epoch(i, epoch, params); };
    ensemble.members[i] = train(gallery, vocab, turns, member_config, hook).params;
  });
  return ensemble;
}

DrawerOutput mean_output(std::span<const DrawerOutput> outputs) {
  if (outputs.empty()) throw Error("mean_output: no outputs");
  if (outputs.size() == 1) return outputs[0];
  const std::size_t G = outputs[0].cliparts.size();
  DrawerOutput mean;
  mean.cliparts.assign(G, ClipartPrediction{});
  const double inv = 1.0 / static_cast<double>(outputs.size());
  for (std::size_t c = 0; c < G; ++c) {
    ClipartPrediction& m = mean.cliparts[c];
    m.score = 0.0;
    m.x = 0.0;
    m.y = 0.0;
    for (const auto& o : outputs) {
      const auto& pc = o.cliparts[c];
      m.score += pc.score;
      for (int k = 0; k < kNumSizes; ++k) m.size_dist[k] += pc.size_dist[k];
      for (int k = 0; k < kNumFlips; ++k) m.flip_dist[k] += pc.flip_dist[k];
      m.x += pc.x;
      m.y += pc.y;
    }
    m.score *= inv;
    for (auto& v : m.size_dist) v *= inv;
    for (auto& v : m.flip_dist) v *= inv;
    m.x *= inv;
    m.y *= inv;
  }
  return mean;
}

EnsembleOutput forward_ensemble(const Ensemble& ensemble, std::string_view input_text, const Scene& canvas) {
  if (ensemble.members.empty()) throw Error("empty ensemble");
  EnsembleOutput out;
  for (const auto& m : ensemble.members) out.members.push_back(forward(m, input_text, canvas));
  out.mean = mean_output(out.members);
  return out;
}

nlohmann::json params_to_json(const DrawerParams& p) {
  nlohmann::json tensors = nlohmann::json::object();
  for (int i = 0; i < kNumTensors; ++i) tensors[std::string(tensor_name(i))] = tensor_to_json(p.tensors[i]);
  std::vector<std::string> vocab(p.vocab.tokens().begin() + 2, p.vocab.tokens().end());
  return {{"schema_version", kWeightSchemaVersion},
          {"gallery_hash", p.gallery_hash},
          {"vocab", vocab},
          {"dims", {{"vocab", p.dims.vocab}, {"embed", p.dims.embed}, {"hidden", p.dims.hidden}, {"gallery", p.dims.gallery}}},
          {"seed", p.seed},
          {"epochs_trained", p.epochs_trained},
          {"tensors", tensors}};
}

DrawerParams params_from_json(const nlohmann::json& j, const Gallery& gallery) {
  try {
    if (!j.is_object() || !j.contains("schema_version")) throw Error("weight file has no schema_version");
    const auto& ver = j["schema_version"];
    const bool ok = (ver.is_number_integer() && ver.get<int>() == kWeightSchemaVersion) ||
                    (ver.is_string() && ver.get<std::string>() == std::to_string(kWeightSchemaVersion));
    if (!ok) throw Error("unsupported weight schema_version " + ver.dump() + " (expected 1)");
    if (j.at("gallery_hash").get<std::string>() != gallery.hash()) {
      throw Error("weight file was trained for a different gallery (hash mismatch)");
    }
    const Vocabulary vocab(j.at("vocab").get<std::vector<std::string>>());
    DrawerParams p = zero_params(vocab, gallery);
    const auto& dims = j.at("dims");
    const DrawerDims stored{dims.at("vocab").get<int>(), dims.at("embed").get<int>(), dims.at("hidden").get<int>(),
                            dims.at("gallery").get<int>()};
    if (!(stored == p.dims)) throw Error("dimension mismatch between weight file and current gallery/vocab");
    p.seed = j.at("seed").get<uint64_t>();
    p.epochs_trained = j.at("epochs_trained").get<int>();
    const auto& tensors = j.at("tensors");
    for (int i = 0; i < kNumTensors; ++i) {
      tensor_from_json(tensors.at(std::string(tensor_name(i))), p.tensors[i], tensor_name(i));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed weight file: ") + e.what());
  }
}

std::string save_params(const DrawerParams& params) { return params_to_json(params).dump() + "\n"; }

DrawerParams load_params(std::string_view bytes, const Gallery& gallery) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("weight file parse error: ") + e.what());
  }
  return params_from_json(j, gallery);
}

std::string save_ensemble(const Ensemble& ensemble) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : ensemble.members) members.push_back(params_to_json(m));
  return nlohmann::json{{"schema_version", kWeightSchemaVersion}, {"members", members}}.dump() + "\n";
}

Ensemble load_ensemble(std::string_view bytes, const Gallery& gallery) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("weight file parse error: ") + e.what());
  }
  Ensemble ensemble;
  if (j.is_object() && j.contains("members")) {
    for (const auto& m : j["members"]) ensemble.members.push_back(params_from_json(m, gallery));
    if (ensemble.members.empty()) throw Error("ensemble file has no members");
  } else {
    ensemble.members.push_back(params_from_json(j, gallery));
  }
  return ensemble;
}

}  // namespace cqdraw
