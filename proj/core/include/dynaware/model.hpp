#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dynaware/action.hpp"
#include "dynaware/autodiff.hpp"
#include "dynaware/similarity.hpp"

namespace dynaware {

enum class LossMode { kBaseline, kHandcrafted, kSelfSupervised };
// How the action enters the scene-action embedding. kAuto picks render for
// the self-supervised loss and FiLM otherwise.
enum class ActionRepr { kAuto, kFilm, kRender };
enum class Combiner { kElementwise, kConcat, kBilinear };
enum class Projection { kNone, kLinear, kMlp2, kMlp3 };
// Pair head target: binned similarity (cross-entropy) or raw v (squared error).
enum class AuxTarget { kBins, kMse };

std::string to_string(LossMode v);
std::string to_string(ActionRepr v);
std::string to_string(Combiner v);
std::string to_string(Projection v);
std::string to_string(AuxTarget v);
LossMode loss_mode_from_string(const std::string& s);
ActionRepr action_repr_from_string(const std::string& s);
Combiner combiner_from_string(const std::string& s);
Projection projection_from_string(const std::string& s);
AuxTarget aux_target_from_string(const std::string& s);

class ModelConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  LossMode loss = LossMode::kHandcrafted;
  ActionRepr action_repr = ActionRepr::kAuto;
  Tier tier = Tier::kOneBall;

  // Encoder: 4 conv blocks on a raster x raster image, then mean-pool and an
  // affine+ReLU neck to embed_dim. raster must be a multiple of 16.
  std::size_t raster = 64;
  std::array<std::size_t, 4> channels{8, 16, 32, 32};
  std::size_t embed_dim = 128;
  std::size_t film_hidden = 64;

  // Hand-crafted pair head.
  Projection projection = Projection::kLinear;
  std::size_t proj_dim = 256;
  Combiner combiner = Combiner::kBilinear;
  AuxTarget aux_target = AuxTarget::kBins;
  SimilarityConfig similarity;

  // Contrastive head.
  Projection ctr_projection = Projection::kLinear;
  std::size_t frames = 2;  // K_c, consecutive rollout frames per sample
  double beta = 0.1;       // scores are beta * z . e_roll
  std::size_t negatives = 63;

  double aux_weight = 1.0;

  ActionRepr resolved_action_repr() const;
  bool operator==(const ModelConfig&) const = default;
};

void validate(const ModelConfig& config);

// Flat key=value view of a config. set_model_option throws ModelConfigError on
// unknown keys and unparsable values.
std::vector<std::pair<std::string, std::string>> model_options(const ModelConfig& config);
void set_model_option(ModelConfig& config, const std::string& key, const std::string& value);
std::string model_config_text(const ModelConfig& config);
ModelConfig model_config_from_text(const std::string& text);

// Batch tensors consumed by the model. Rasters are [count, 4, R, R].
template <typename T>
struct ModelInputs {
  ad::Tensor<T> scenes;    // one per task (FiLM path)
  ad::Tensor<T> rendered;  // one per sample with the action drawn in (render path)
  ad::Tensor<T> actions;   // [N, action_dim]
  std::vector<std::size_t> task_of;  // sample -> task row of `scenes`
  std::vector<T> labels;             // solved flags as 0/1

  // Hand-crafted loss: ordered sample pairs (both from the same task) and targets.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<int> pair_bins;
  std::vector<T> pair_v;

  // Self-supervised loss: K_c consecutive frames per sample, sample-major.
  ad::Tensor<T> frames;

  std::size_t samples() const { return task_of.size(); }
};

template <typename T>
struct LossParts {
  ad::Var<T> total;   // solved + aux_weight * aux
  ad::Var<T> solved;
  ad::Var<T> aux;     // invalid in baseline mode
};

// Loss building blocks, usable without a model.
template <typename T>
ad::Var<T> solved_loss(ad::Var<T> logits, std::span<const T> labels);
// Throws ModelConfigError when a bin is outside [0, K-1].
template <typename T>
ad::Var<T> aux_loss_handcrafted(ad::Var<T> logits, std::span<const int> bins);
template <typename T>
ad::Var<T> aux_loss_mse(ad::Var<T> prediction, std::span<const T> v);
// InfoNCE with candidates grouped into blocks of (negatives + 1) consecutive
// rows; row i's positive is e_roll row i. Throws for fewer than 2 rows.
template <typename T>
ad::Var<T> contrastive_loss(ad::Var<T> z, ad::Var<T> e_roll, T beta, std::size_t negatives);

template <typename T>
class Model {
 public:
  using Var = ad::Var<T>;

  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  std::vector<ad::Parameter<T>>& parameters() { return params_; }
  const std::vector<ad::Parameter<T>>& parameters() const { return params_; }
  std::vector<ad::Parameter<T>*> parameter_ptrs();
  bool has_parameter(const std::string& name) const { return index_.count(name) > 0; }
  ad::Parameter<T>& parameter(const std::string& name);
  std::size_t parameter_count() const;
  void zero_grad();

  // A tape with parameter leaves bound on first use.
  class Graph {
   public:
    explicit Graph(Model& model, bool check_finite = ad::kCheckFiniteByDefault);
    ad::Tape<T>& tape() { return tape_; }
    Var param(std::size_t index);
    Var param(const std::string& name) { return param(model_.index_.at(name)); }
    Var input(ad::Tensor<T> value) { return tape_.constant(std::move(value)); }

   private:
    Model& model_;
    ad::Tape<T> tape_;
    std::vector<Var> bound_;
  };

  // Conv blocks 1-3: [N, 4, R, R] -> [N, C3, R/8, R/8]
  Var trunk(Graph& g, Var x);
  // Block 4, mean-pool and neck: -> [N, embed_dim]
  Var head(Graph& g, Var h3);
  Var encode(Graph& g, Var x) { return head(g, trunk(g, x)); }

  // Per-channel (gamma, shift) for block-3 features; gamma = 1 + MLP output.
  std::pair<Var, Var> film_params(Graph& g, Var actions);
  // Scene rasters [t, ...] are encoded once; features are gathered per sample.
  Var embed_film(Graph& g, Var scenes, Var actions, std::span<const std::size_t> task_of);
  Var embed_render(Graph& g, Var rendered) { return encode(g, rendered); }
  Var embed(Graph& g, const ModelInputs<T>& in);

  Var score(Graph& g, Var e);    // [N, 1] logits
  Var project(Graph& g, Var e);  // p, [N, proj_dim] (or embed_dim without projection)
  // u for each (a, a') pair: [pairs, K], or [pairs, 1] with the MSE target.
  Var pair_head(Graph& g, Var p, std::span<const std::pair<std::size_t, std::size_t>> pairs);
  // frames [N * K_c, 4, R, R], sample-major -> [N, embed_dim]
  Var rollout_embedding(Graph& g, Var frames);
  Var query(Graph& g, Var e);  // z, [N, embed_dim]

  LossParts<T> loss(Graph& g, const ModelInputs<T>& in);

  // Bin logits K, or 1 with the MSE target.
  std::size_t pair_outputs() const;
  std::size_t proj_out_dim() const;

 private:
  std::size_t add_param(const std::string& name, ad::Shape shape, std::size_t fan_in, std::uint64_t seed, bool zero = false);
  void add_affine(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed);
  void add_mlp(const std::string& name, Projection depth, std::size_t in, std::size_t hidden, std::size_t out,
               std::uint64_t seed);
  Var affine(Graph& g, const std::string& name, Var x);
  Var mlp(Graph& g, const std::string& name, Projection depth, Var x);

  ModelConfig config_;
  std::vector<ad::Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace dynaware
