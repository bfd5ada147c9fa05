#include "dynaware/model.hpp"

#include <cmath>
#include <sstream>

#include "dynaware/rng.hpp"
#include "dynaware/text_parse.hpp"

namespace dynaware {

// ---------------------------------------------------------------- enums

namespace {

template <typename E, std::size_t N>
std::string enum_name(E v, const std::array<std::pair<E, const char*>, N>& table) {
  for (const auto& [e, name] : table) {
    if (e == v) return name;
  }
  return "?";
}

template <typename E, std::size_t N>
E enum_parse(const std::string& s, const std::array<std::pair<E, const char*>, N>& table, const char* what) {
  std::string options;
  for (const auto& [e, name] : table) {
    if (s == name) return e;
    options += options.empty() ? name : std::string(", ") + name;
  }
  throw ModelConfigError(std::string("unknown ") + what + " '" + s + "' (expected one of: " + options + ")");
}

constexpr std::array<std::pair<LossMode, const char*>, 3> kLossNames{{
    {LossMode::kBaseline, "baseline"}, {LossMode::kHandcrafted, "handcrafted"}, {LossMode::kSelfSupervised, "selfsup"}}};
constexpr std::array<std::pair<ActionRepr, const char*>, 3> kReprNames{{
    {ActionRepr::kAuto, "auto"}, {ActionRepr::kFilm, "film"}, {ActionRepr::kRender, "render"}}};
constexpr std::array<std::pair<Combiner, const char*>, 3> kCombinerNames{{
    {Combiner::kElementwise, "elementwise"}, {Combiner::kConcat, "concat"}, {Combiner::kBilinear, "bilinear"}}};
constexpr std::array<std::pair<Projection, const char*>, 4> kProjectionNames{{
    {Projection::kNone, "none"}, {Projection::kLinear, "linear"}, {Projection::kMlp2, "mlp2"}, {Projection::kMlp3, "mlp3"}}};
constexpr std::array<std::pair<AuxTarget, const char*>, 2> kTargetNames{{
    {AuxTarget::kBins, "bins"}, {AuxTarget::kMse, "mse"}}};

}  // namespace

std::string to_string(LossMode v) { return enum_name(v, kLossNames); }
std::string to_string(ActionRepr v) { return enum_name(v, kReprNames); }
std::string to_string(Combiner v) { return enum_name(v, kCombinerNames); }
std::string to_string(Projection v) { return enum_name(v, kProjectionNames); }
std::string to_string(AuxTarget v) { return enum_name(v, kTargetNames); }
LossMode loss_mode_from_string(const std::string& s) { return enum_parse(s, kLossNames, "loss mode"); }
ActionRepr action_repr_from_string(const std::string& s) { return enum_parse(s, kReprNames, "action representation"); }
Combiner combiner_from_string(const std::string& s) { return enum_parse(s, kCombinerNames, "combiner"); }
Projection projection_from_string(const std::string& s) { return enum_parse(s, kProjectionNames, "projection"); }
AuxTarget aux_target_from_string(const std::string& s) { return enum_parse(s, kTargetNames, "aux target"); }

// ---------------------------------------------------------------- config

ActionRepr ModelConfig::resolved_action_repr() const {
  if (action_repr != ActionRepr::kAuto) return action_repr;
  return loss == LossMode::kSelfSupervised ? ActionRepr::kRender : ActionRepr::kFilm;
}

void validate(const ModelConfig& c) {
  if (c.raster < 16 || c.raster % 16 != 0) throw ModelConfigError("model: raster must be a positive multiple of 16");
  for (std::size_t ch : c.channels) {
    if (ch == 0) throw ModelConfigError("model: channel counts must be positive");
  }
  if (c.embed_dim == 0 || c.proj_dim == 0 || c.film_hidden == 0) throw ModelConfigError("model: dimensions must be positive");
  try {
    validate(c.similarity);
  } catch (const SimilarityError& e) {
    throw ModelConfigError(std::string("model: ") + e.what());
  }
  if (c.frames < 1) throw ModelConfigError("model: frames must be >= 1");
  if (!(c.beta > 0.0) || !std::isfinite(c.beta)) throw ModelConfigError("model: beta must be positive");
  if (c.negatives < 1) throw ModelConfigError("model: negatives must be >= 1");
  if (!(c.aux_weight >= 0.0) || !std::isfinite(c.aux_weight)) throw ModelConfigError("model: aux_weight must be >= 0");
}

std::vector<std::pair<std::string, std::string>> model_options(const ModelConfig& c) {
  std::ostringstream ch;
  for (std::size_t i = 0; i < c.channels.size(); ++i) ch << (i ? "," : "") << c.channels[i];
  return {
      {"loss", to_string(c.loss)},
      {"action_repr", to_string(c.action_repr)},
      {"tier", c.tier == Tier::kOneBall ? "1" : "2"},
      {"raster", std::to_string(c.raster)},
      {"channels", ch.str()},
      {"embed_dim", std::to_string(c.embed_dim)},
      {"film_hidden", std::to_string(c.film_hidden)},
      {"projection", to_string(c.projection)},
      {"proj_dim", std::to_string(c.proj_dim)},
      {"combiner", to_string(c.combiner)},
      {"aux_target", to_string(c.aux_target)},
      {"bins", std::to_string(c.similarity.bins)},
      {"alpha", format_double(c.similarity.alpha)},
      {"window", to_string(c.similarity.window)},
      {"ctr_projection", to_string(c.ctr_projection)},
      {"frames", std::to_string(c.frames)},
      {"beta", format_double(c.beta)},
      {"negatives", std::to_string(c.negatives)},
      {"aux_weight", format_double(c.aux_weight)},
  };
}

void set_model_option(ModelConfig& c, const std::string& key, const std::string& value) {
  try {
    if (key == "loss") c.loss = loss_mode_from_string(value);
    else if (key == "action_repr") c.action_repr = action_repr_from_string(value);
    else if (key == "tier") {
      const auto t = parse_size(value);
      if (t != 1 && t != 2) throw ModelConfigError("tier must be 1 or 2");
      c.tier = t == 1 ? Tier::kOneBall : Tier::kTwoBall;
    } else if (key == "raster") c.raster = parse_size(value);
    else if (key == "channels") {
      const auto parts = split_list(value);
      if (parts.size() != 4) throw ModelConfigError("channels needs 4 comma-separated counts");
      for (std::size_t i = 0; i < 4; ++i) c.channels[i] = parse_size(parts[i]);
    } else if (key == "embed_dim") c.embed_dim = parse_size(value);
    else if (key == "film_hidden") c.film_hidden = parse_size(value);
    else if (key == "projection") c.projection = projection_from_string(value);
    else if (key == "proj_dim") c.proj_dim = parse_size(value);
    else if (key == "combiner") c.combiner = combiner_from_string(value);
    else if (key == "aux_target") c.aux_target = aux_target_from_string(value);
    else if (key == "bins") c.similarity.bins = static_cast<int>(parse_size(value));
    else if (key == "alpha") c.similarity.alpha = parse_double(value);
    else if (key == "window") c.similarity.window = frame_window_from_string(value);
    else if (key == "ctr_projection") c.ctr_projection = projection_from_string(value);
    else if (key == "frames") c.frames = parse_size(value);
    else if (key == "beta") c.beta = parse_double(value);
    else if (key == "negatives") c.negatives = parse_size(value);
    else if (key == "aux_weight") c.aux_weight = parse_double(value);
    else throw ModelConfigError("unknown model key '" + key + "'");
  } catch (const ModelConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelConfigError("model key '" + key + "': " + e.what());
  }
}

std::string model_config_text(const ModelConfig& c) {
  std::string out;
  for (const auto& [k, v] : model_options(c)) out += k + "=" + v + "\n";
  return out;
}

ModelConfig model_config_from_text(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ModelConfigError("model config line without '=': " + line);
    set_model_option(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------- losses

template <typename T>
ad::Var<T> solved_loss(ad::Var<T> logits, std::span<const T> labels) {
  return ad::sigmoid_bce(logits, labels);
}

template <typename T>
ad::Var<T> aux_loss_handcrafted(ad::Var<T> logits, std::span<const int> bins) {
  if (!logits.valid() || logits.shape().size() != 2) throw ad::ShapeError("aux loss: logits must be [pairs, K]");
  const int k = static_cast<int>(logits.dim(1));
  for (int b : bins) {
    if (b < 0 || b >= k) throw ModelConfigError("aux loss: target bin " + std::to_string(b) + " outside [0, " + std::to_string(k - 1) + "]");
  }
  return ad::softmax_xent(logits, bins);
}

template <typename T>
ad::Var<T> aux_loss_mse(ad::Var<T> prediction, std::span<const T> v) {
  return ad::mse(prediction, v);
}

template <typename T>
ad::Var<T> contrastive_loss(ad::Var<T> z, ad::Var<T> e_roll, T beta, std::size_t negatives) {
  if (!z.valid() || !e_roll.valid() || z.shape() != e_roll.shape() || z.shape().size() != 2) {
    throw ad::ShapeError("contrastive loss: z and e_roll must be matching [N, d] matrices");
  }
  const std::size_t n = z.dim(0);
  if (n < 2) throw ad::ShapeError("contrastive loss: needs a batch of at least 2");
  if (negatives < 1) throw ad::ShapeError("contrastive loss: needs at least one negative");
  const std::size_t group = std::min(negatives + 1, n);
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  for (std::size_t lo = 0; lo < n; lo += group) blocks.emplace_back(lo, std::min(lo + group, n));
  // A trailing single row has no negatives of its own.
  if (blocks.size() > 1 && blocks.back().second - blocks.back().first < 2) {
    blocks[blocks.size() - 2].second = n;
    blocks.pop_back();
  }
  ad::Var<T> total;
  for (const auto& [lo, hi] : blocks) {
    std::vector<std::size_t> idx(hi - lo);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = lo + i;
    std::vector<std::size_t> pos(idx.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
    ad::Var<T> zs = blocks.size() == 1 ? z : ad::rows(z, std::span<const std::size_t>(idx));
    ad::Var<T> es = blocks.size() == 1 ? e_roll : ad::rows(e_roll, std::span<const std::size_t>(idx));
    ad::Var<T> part = ad::infonce(ad::matmul_nt(zs, es), std::span<const std::size_t>(pos), beta);
    if (blocks.size() > 1) part = ad::scale(part, static_cast<T>(static_cast<double>(hi - lo) / static_cast<double>(n)));
    total = total.valid() ? ad::add(total, part) : part;
  }
  return total;
}

// ---------------------------------------------------------------- model

namespace {

constexpr ad::Conv2dSpec kConvSpecs[4] = {{4, 0}, {2, 1}, {1, 1}, {2, 1}};
constexpr std::size_t kConvKernels[4] = {4, 3, 3, 3};

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  validate(config_);
  const std::size_t in_ch[4] = {4, config_.channels[0], config_.channels[1], config_.channels[2]};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string name = "enc.conv" + std::to_string(i + 1);
    const std::size_t k = kConvKernels[i];
    add_param(name + ".w", {config_.channels[i], in_ch[i], k, k}, in_ch[i] * k * k, seed);
    add_param(name + ".b", {config_.channels[i]}, 0, seed, true);
  }
  add_affine("enc.neck", config_.channels[3], config_.embed_dim, seed);
  if (config_.resolved_action_repr() == ActionRepr::kFilm) {
    const std::size_t adim = action_dim(config_.tier);
    add_affine("film.l1", adim, config_.film_hidden, seed);
    add_affine("film.l2", config_.film_hidden, 2 * config_.channels[2], seed);
  }
  add_affine("score", config_.embed_dim, 1, seed);
  if (config_.loss == LossMode::kHandcrafted) {
    add_mlp("proj", config_.projection, config_.embed_dim, config_.proj_dim, config_.proj_dim, seed);
    const std::size_t p = proj_out_dim();
    const std::size_t outs = pair_outputs();
    switch (config_.combiner) {
      case Combiner::kElementwise: add_affine("pair", p, outs, seed); break;
      case Combiner::kConcat: add_affine("pair", 2 * p, outs, seed); break;
      case Combiner::kBilinear:
        add_param("pair.w", {outs, p * p}, p * p, seed);
        add_param("pair.b", {outs}, 0, seed, true);
        break;
    }
  }
  if (config_.loss == LossMode::kSelfSupervised) {
    add_mlp("ctr", config_.ctr_projection, config_.embed_dim, config_.embed_dim, config_.embed_dim, seed);
    add_affine("roll.l1", config_.frames * config_.embed_dim, config_.embed_dim, seed);
    add_affine("roll.l2", config_.embed_dim, config_.embed_dim, seed);
  }
}

template <typename T>
std::size_t Model<T>::pair_outputs() const {
  return config_.aux_target == AuxTarget::kMse ? 1 : static_cast<std::size_t>(config_.similarity.bins);
}

template <typename T>
std::size_t Model<T>::proj_out_dim() const {
  return config_.projection == Projection::kNone ? config_.embed_dim : config_.proj_dim;
}

template <typename T>
std::size_t Model<T>::add_param(const std::string& name, ad::Shape shape, std::size_t fan_in, std::uint64_t seed, bool zero) {
  ad::Tensor<T> value(std::move(shape));
  if (!zero) {
    // Kaiming-uniform, one stream per parameter name.
    Rng rng(derive_seed(seed, fnv1a(name)));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& v : value.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  index_[name] = params_.size();
  params_.emplace_back(name, std::move(value));
  return params_.size() - 1;
}

template <typename T>
void Model<T>::add_affine(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed) {
  add_param(name + ".w", {out, in}, in, seed);
  add_param(name + ".b", {out}, 0, seed, true);
}

template <typename T>
void Model<T>::add_mlp(const std::string& name, Projection depth, std::size_t in, std::size_t hidden, std::size_t out,
                       std::uint64_t seed) {
  switch (depth) {
    case Projection::kNone: break;
    case Projection::kLinear: add_affine(name + ".l1", in, out, seed); break;
    case Projection::kMlp2:
      add_affine(name + ".l1", in, hidden, seed);
      add_affine(name + ".l2", hidden, out, seed);
      break;
    case Projection::kMlp3:
      add_affine(name + ".l1", in, hidden, seed);
      add_affine(name + ".l2", hidden, hidden, seed);
      add_affine(name + ".l3", hidden, out, seed);
      break;
  }
}

template <typename T>
std::vector<ad::Parameter<T>*> Model<T>::parameter_ptrs() {
  std::vector<ad::Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
ad::Parameter<T>& Model<T>::parameter(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("model has no parameter '" + name + "'");
  return params_[it->second];
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
Model<T>::Graph::Graph(Model& model, bool check_finite) : model_(model), tape_(check_finite), bound_(model.params_.size()) {}

template <typename T>
ad::Var<T> Model<T>::Graph::param(std::size_t index) {
  if (!bound_.at(index).valid()) bound_[index] = tape_.param(model_.params_[index]);
  return bound_[index];
}

template <typename T>
ad::Var<T> Model<T>::affine(Graph& g, const std::string& name, Var x) {
  return ad::affine(x, g.param(name + ".w"), g.param(name + ".b"));
}

template <typename T>
ad::Var<T> Model<T>::mlp(Graph& g, const std::string& name, Projection depth, Var x) {
  switch (depth) {
    case Projection::kNone: return x;
    case Projection::kLinear: return affine(g, name + ".l1", x);
    case Projection::kMlp2: return affine(g, name + ".l2", ad::relu(affine(g, name + ".l1", x)));
    case Projection::kMlp3:
      return affine(g, name + ".l3", ad::relu(affine(g, name + ".l2", ad::relu(affine(g, name + ".l1", x)))));
  }
  return x;
}

template <typename T>
ad::Var<T> Model<T>::trunk(Graph& g, Var x) {
  if (x.shape().size() != 4 || x.dim(1) != 4 || x.dim(2) != config_.raster || x.dim(3) != config_.raster) {
    throw ad::ShapeError("encoder: expected [N, 4, " + std::to_string(config_.raster) + ", " +
                         std::to_string(config_.raster) + "], got " + ad::shape_string(x.shape()));
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name = "enc.conv" + std::to_string(i + 1);
    x = ad::relu(ad::conv2d(x, g.param(name + ".w"), g.param(name + ".b"), kConvSpecs[i]));
  }
  return x;
}

template <typename T>
ad::Var<T> Model<T>::head(Graph& g, Var h3) {
  Var h = ad::relu(ad::conv2d(h3, g.param("enc.conv4.w"), g.param("enc.conv4.b"), kConvSpecs[3]));
  return ad::relu(affine(g, "enc.neck", ad::mean_pool(h)));
}

template <typename T>
std::pair<ad::Var<T>, ad::Var<T>> Model<T>::film_params(Graph& g, Var actions) {
  if (!has_parameter("film.l1.w")) throw ModelConfigError("model was built without FiLM parameters");
  const std::size_t c = config_.channels[2];
  Var out = affine(g, "film.l2", ad::relu(affine(g, "film.l1", actions)));
  return {ad::add_scalar(ad::columns(out, 0, c), T(1)), ad::columns(out, c, 2 * c)};
}

template <typename T>
ad::Var<T> Model<T>::embed_film(Graph& g, Var scenes, Var actions, std::span<const std::size_t> task_of) {
  if (actions.shape().size() != 2 || actions.dim(0) != task_of.size()) {
    throw ad::ShapeError("embed_film: need one action row per sample");
  }
  Var h = ad::rows(trunk(g, scenes), task_of);
  auto [gamma, shift] = film_params(g, actions);
  return head(g, ad::film(h, gamma, shift));
}

template <typename T>
ad::Var<T> Model<T>::embed(Graph& g, const ModelInputs<T>& in) {
  if (config_.resolved_action_repr() == ActionRepr::kFilm) {
    return embed_film(g, g.input(in.scenes), g.input(in.actions), in.task_of);
  }
  return embed_render(g, g.input(in.rendered));
}

template <typename T>
ad::Var<T> Model<T>::score(Graph& g, Var e) {
  return affine(g, "score", e);
}

template <typename T>
ad::Var<T> Model<T>::project(Graph& g, Var e) {
  if (config_.loss != LossMode::kHandcrafted) throw ModelConfigError("projection head exists only for the handcrafted loss");
  return mlp(g, "proj", config_.projection, e);
}

template <typename T>
ad::Var<T> Model<T>::pair_head(Graph& g, Var p, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  if (config_.loss != LossMode::kHandcrafted) throw ModelConfigError("pair head exists only for the handcrafted loss");
  if (config_.combiner == Combiner::kBilinear) {
    return ad::bilinear(p, p, g.param("pair.w"), g.param("pair.b"), pairs);
  }
  std::vector<std::size_t> first(pairs.size()), second(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    first[i] = pairs[i].first;
    second[i] = pairs[i].second;
  }
  Var a = ad::rows(p, std::span<const std::size_t>(first));
  Var b = ad::rows(p, std::span<const std::size_t>(second));
  Var j = config_.combiner == Combiner::kElementwise ? ad::mul(a, b) : ad::concat(a, b);
  return affine(g, "pair", j);
}

template <typename T>
ad::Var<T> Model<T>::rollout_embedding(Graph& g, Var frames) {
  if (config_.loss != LossMode::kSelfSupervised) throw ModelConfigError("rollout embedding exists only for the selfsup loss");
  const std::size_t k = config_.frames;
  if (frames.shape().size() != 4 || frames.dim(0) % k != 0 || frames.dim(0) == 0) {
    throw ad::ShapeError("rollout_embedding: frame count must be a positive multiple of K_c = " + std::to_string(k));
  }
  const std::size_t n = frames.dim(0) / k;
  Var e = encode(g, frames);  // [n * k, d], sample-major
  Var joined = ad::reshape(e, {n, k * config_.embed_dim});
  return affine(g, "roll.l2", ad::relu(affine(g, "roll.l1", joined)));
}

template <typename T>
ad::Var<T> Model<T>::query(Graph& g, Var e) {
  if (config_.loss != LossMode::kSelfSupervised) throw ModelConfigError("contrastive head exists only for the selfsup loss");
  return mlp(g, "ctr", config_.ctr_projection, e);
}

template <typename T>
LossParts<T> Model<T>::loss(Graph& g, const ModelInputs<T>& in) {
  LossParts<T> out;
  Var e = embed(g, in);
  out.solved = solved_loss(score(g, e), std::span<const T>(in.labels));
  switch (config_.loss) {
    case LossMode::kBaseline: out.total = out.solved; return out;
    case LossMode::kHandcrafted: {
      Var u = pair_head(g, project(g, e), in.pairs);
      out.aux = config_.aux_target == AuxTarget::kBins ? aux_loss_handcrafted(u, std::span<const int>(in.pair_bins))
                                                       : aux_loss_mse(u, std::span<const T>(in.pair_v));
      break;
    }
    case LossMode::kSelfSupervised: {
      Var e_roll = rollout_embedding(g, g.input(in.frames));
      out.aux = contrastive_loss(query(g, e), e_roll, static_cast<T>(config_.beta), config_.negatives);
      break;
    }
  }
  out.total = ad::add(out.solved, ad::scale(out.aux, static_cast<T>(config_.aux_weight)));
  return out;
}

template class Model<float>;
template class Model<double>;

template ad::Var<float> solved_loss<float>(ad::Var<float>, std::span<const float>);
template ad::Var<double> solved_loss<double>(ad::Var<double>, std::span<const double>);
template ad::Var<float> aux_loss_handcrafted<float>(ad::Var<float>, std::span<const int>);
template ad::Var<double> aux_loss_handcrafted<double>(ad::Var<double>, std::span<const int>);
template ad::Var<float> aux_loss_mse<float>(ad::Var<float>, std::span<const float>);
template ad::Var<double> aux_loss_mse<double>(ad::Var<double>, std::span<const double>);
template ad::Var<float> contrastive_loss<float>(ad::Var<float>, ad::Var<float>, float, std::size_t);
template ad::Var<double> contrastive_loss<double>(ad::Var<double>, ad::Var<double>, double, std::size_t);

}  // namespace dynaware
