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

#ifndef CQDRAW_DRAWER_H_
#define CQDRAW_DRAWER_H_

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cqdraw/ingest.h"
#include "cqdraw/parallel.h"
#include "cqdraw/world.h"

namespace cqdraw {

inline constexpr int kEmbedDim = 64;
inline constexpr int kHiddenDim = 256;
// Per-clipart block width, shared by the canvas encoding and the output
// heads: [present|score, size x3, flip x2, x, y].
inline constexpr int kBlockWidth = 8;
inline constexpr int kSlotPresent = 0;
inline constexpr int kSlotSize = 1;
inline constexpr int kSlotFlip = 4;
inline constexpr int kSlotX = 6;
inline constexpr int kSlotY = 7;

inline constexpr int kWeightSchemaVersion = 1;

// Lowercase words; every punctuation character becomes its own token.
std::vector<std::string> tokenize_words(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kPadding = 0;
  static constexpr int kUnknown = 1;

  Vocabulary();
  // `tokens` are the non-reserved entries, assigned indices from 2 in order.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  // Sorted union of the tokens of `texts`, the gallery names and the fixed
  // instruction/question/answer template words.
  static Vocabulary build(const std::vector<std::string>& texts, const Gallery& gallery);

  int size() const { return static_cast<int>(tokens_.size()); }
  int index(std::string_view token) const;
  // Includes the two reserved entries at 0 and 1.
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<int> encode(std::string_view text) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }
  bool operator==(const Tensor&) const = default;
};

enum TensorId { kEmbedding = 0, kW1, kB1, kW2, kB2, kW3, kB3, kNumTensors };
std::string_view tensor_name(int id);

struct DrawerDims {
  int vocab = 0;
  int embed = kEmbedDim;
  int hidden = kHiddenDim;
  int gallery = 0;

  int input() const { return embed + gallery * kBlockWidth; }
  int output() const { return gallery * kBlockWidth; }
  bool operator==(const DrawerDims&) const = default;
};

struct DrawerParams {
  Vocabulary vocab;
  std::string gallery_hash;
  std::vector<bool> symmetric;  // per clipart, from the gallery
  DrawerDims dims;
  uint64_t seed = 0;
  int epochs_trained = 0;
  std::array<Tensor, kNumTensors> tensors;

  std::size_t parameter_count() const;
  bool operator==(const DrawerParams&) const = default;
};

// Zero tensors with shapes for (vocab, gallery).
DrawerParams zero_params(const Vocabulary& vocab, const Gallery& gallery);
// Every entry uniform in [-scale, scale] from `seed`.
DrawerParams init_params(const Vocabulary& vocab, const Gallery& gallery, uint64_t seed,
                         double scale = 0.08);

// Mean of the token embedding rows; zero vector for no tokens.
std::vector<double> encode_text(const DrawerParams& params, std::span<const int> tokens);
// Blocks of kBlockWidth per gallery id; absent cliparts are all zero.
std::vector<double> encode_canvas(int gallery_size, const Scene& scene);
// Inverse of encode_canvas for present/size/flip/x/y. People get expression
// and pose 0 since those are not encoded.
Scene decode_canvas(const Gallery& gallery, std::span<const double> encoding);

struct ClipartPrediction {
  double score = 0.0;
  std::array<double, kNumSizes> size_dist{};
  std::array<double, kNumFlips> flip_dist{};
  double x = 0.5;
  double y = 0.5;

  bool selected() const { return score > 0.0; }
  Size size() const;
  Flip flip() const;
};

struct DrawerOutput {
  std::vector<ClipartPrediction> cliparts;  // indexed by gallery id

  std::vector<int> selected() const;
};

// Throws on a dimension mismatch between params and the canvas.
DrawerOutput forward(const DrawerParams& params, std::string_view input_text, const Scene& canvas);

struct ClipartTarget {
  bool selected = false;
  Size size = Size::kMedium;
  Flip flip = Flip::kFacingLeft;
  double x = 0.5;
  double y = 0.5;
};

struct TurnTargets {
  std::vector<ClipartTarget> cliparts;  // indexed by gallery id
};

struct TrainingTurn {
  std::string input_text;
  Scene canvas_before;
  TurnTargets targets;
};

// The input text used for turn t: previous drawer utterance, then the
// current teller utterance.
std::string drawer_input_text(std::string_view previous_drawer, std::string_view teller);

// Selection targets are the cliparts added or modified between consecutive
// canvases; attribute targets come from the canvas after the turn.
TurnTargets targets_from_transition(int gallery_size, const Scene& before, const Scene& after);
std::vector<TrainingTurn> training_turns(const CorpusDialogue& dialogue, int gallery_size);
std::vector<TrainingTurn> training_turns(const std::vector<CorpusDialogue>& corpus, int gallery_size);

struct LossWeights {
  double select = 1.0;
  double size = 1.0;
  double flip = 1.0;
  double position = 1.0;
};

// Per-turn loss: sum over cliparts of BCE(sigmoid(score), selected) plus, for
// selected targets, size CE, flip CE (asymmetric cliparts only) and squared
// position error.
double turn_loss(const DrawerParams& params, const DrawerOutput& output, const TurnTargets& targets,
                 const LossWeights& weights = {});

using Gradients = std::array<Tensor, kNumTensors>;

// Mean loss over `batch`; when `grads` is non-null it receives the gradient
// of that mean with respect to every tensor.
double loss_and_gradient(const DrawerParams& params, std::span<const TrainingTurn> batch,
                         const LossWeights& weights, Gradients* grads);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int epochs = 15;
  int batch_size = 32;
  uint64_t seed = 0;
  double init_scale = 0.08;
  LossWeights weights;
};

struct TrainResult {
  DrawerParams params;
  std::vector<double> epoch_losses;  // mean per-turn loss during each epoch
};

using CheckpointFn = std::function<void(int epoch, const DrawerParams& params, double mean_loss)>;

// Mini-batch SGD with momentum. Deterministic per (seed, turns, config).
TrainResult train(const Gallery& gallery, const Vocabulary& vocab, std::span<const TrainingTurn> turns,
                  const TrainConfig& config, const CheckpointFn& on_epoch = {});

struct Ensemble {
  std::vector<DrawerParams> members;

  int size() const { return static_cast<int>(members.size()); }
  const DrawerParams& front() const { return members.front(); }
};

// One member per seed (config.seed is replaced by each seed).
Ensemble train_ensemble(const Gallery& gallery, const Vocabulary& vocab,
                        std::span<const TrainingTurn> turns, const TrainConfig& config,
                        const std::vector<uint64_t>& seeds, Execution execution = Execution::kParallel,
                        const std::function<void(std::size_t member, int epoch, const DrawerParams&)>&
                            on_epoch = {});

struct EnsembleOutput {
  DrawerOutput mean;  // arithmetic mean of member scores, distributions, positions
  std::vector<DrawerOutput> members;
};

EnsembleOutput forward_ensemble(const Ensemble& ensemble, std::string_view input_text,
                                const Scene& canvas);
DrawerOutput mean_output(std::span<const DrawerOutput> outputs);

// JSON weight file. load_* check schema version and that the gallery and
// tensor dimensions match.
nlohmann::json params_to_json(const DrawerParams& params);
DrawerParams params_from_json(const nlohmann::json& j, const Gallery& gallery);
std::string save_params(const DrawerParams& params);
DrawerParams load_params(std::string_view bytes, const Gallery& gallery);
// {"schema_version":1,"members":[...]} or a single weight object.
std::string save_ensemble(const Ensemble& ensemble);
Ensemble load_ensemble(std::string_view bytes, const Gallery& gallery);

}  // namespace cqdraw

#endif  // CQDRAW_DRAWER_H_
