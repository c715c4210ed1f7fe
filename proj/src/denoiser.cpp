#include "trograph/denoiser.hpp"

#include <cmath>
#include <bit>
#include <cstring>
#include <fstream>

#include "trograph/errors.hpp"

namespace tro::denoise {

using ad::Matrix;
using ad::Tape;
using ad::Var;

void ModelConfig::validate() const {
  if (d < 2 || d % 2 != 0) throw ConfigError("model.d must be an even number >= 2");
  if (layers < 1) throw ConfigError("model.layers must be >= 1");
  if (object_feature_dim < 1 || link_embed_dim < 1) throw ConfigError("model feature dims must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"d", d},
          {"layers", layers},
          {"object_feature_dim", object_feature_dim},
          {"link_embed_dim", link_embed_dim},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.d = j.value("d", c.d);
  c.layers = j.value("layers", c.layers);
  c.object_feature_dim = j.value("object_feature_dim", c.object_feature_dim);
  c.link_embed_dim = j.value("link_embed_dim", c.link_embed_dim);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

namespace {

constexpr int kPoseDim = 6;
constexpr int kObjectGeomDim = 4;  // centroid + scale

void add_linear(ad::ParameterSet& p, Rng& rng, const std::string& name, int in, int out) {
  Matrix w(out, in);
  const double sd = 1.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * rng.normal();
  p.add(name + ".weight", std::move(w));
  p.add(name + ".bias", Matrix::Zero(1, out));
}

void add_weight(ad::ParameterSet& p, Rng& rng, const std::string& name, int in, int out) {
  Matrix w(out, in);
  const double sd = 1.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * rng.normal();
  p.add(name, std::move(w));
}

void add_norm(ad::ParameterSet& p, const std::string& name, int d) {
  p.add(name + ".gain", Matrix::Ones(1, d));
  p.add(name + ".bias", Matrix::Zero(1, d));
}

void add_mlp(ad::ParameterSet& p, Rng& rng, const std::string& name, int in, int hidden, int out) {
  add_linear(p, rng, name + ".0", in, hidden);
  add_linear(p, rng, name + ".1", hidden, out);
}

void add_attention(ad::ParameterSet& p, Rng& rng, const std::string& name, int d, bool separate_source,
                   bool update_edges) {
  add_norm(p, name + ".ln_tgt", d);
  if (separate_source) add_norm(p, name + ".ln_src", d);
  add_norm(p, name + ".ln_edge", d);
  add_linear(p, rng, name + ".h_q", d, d);
  add_linear(p, rng, name + ".h_k", d, d);
  add_weight(p, rng, name + ".h_v.tgt", d, d);
  add_weight(p, rng, name + ".h_v.src", d, d);
  add_weight(p, rng, name + ".h_v.edge", d, d);
  p.add(name + ".h_v.bias", Matrix::Zero(1, d));
  add_mlp(p, rng, name + ".mlp_x", d, d, d);
  if (update_edges) add_mlp(p, rng, name + ".mlp_e", 2 * d, d, d);
}

struct Net {
  Tape& tape;
  const ad::ParameterSet& p;

  Var param(const std::string& n) const { return tape.parameter(p, n); }
  Var linear(Var x, const std::string& n) const { return tape.linear(x, param(n + ".weight"), param(n + ".bias")); }
  Var mlp(Var x, const std::string& n) const { return linear(tape.silu(linear(x, n + ".0")), n + ".1"); }
  Var norm(Var x, const std::string& n) const { return tape.layer_norm(x, param(n + ".gain"), param(n + ".bias")); }
};

/// Edge-augmented attention. Pair rows are target-major: row i * ns + j.
/// Returns the updated target tokens and edge tokens.
std::pair<Var, Var> attention(const Net& net, const std::string& name, Var x_tgt, Var x_src, Var edge, int d,
                              bool self, const std::function<bool(Eigen::Index, Eigen::Index)>& blocked,
                              bool update_edges) {
  Tape& tp = net.tape;
  Var t_n = net.norm(x_tgt, name + ".ln_tgt");
  Var s_n = self ? t_n : net.norm(x_src, name + ".ln_src");
  Var e_n = net.norm(edge, name + ".ln_edge");
  const Eigen::Index nt = x_tgt.rows(), ns = x_src.rows();

  Var q = net.linear(t_n, name + ".h_q");
  Var k = net.linear(s_n, name + ".h_k");
  // h_V over concat(x_tgt, x_src, e) split into its three column blocks
  Var v_t = tp.repeat_rows(tp.matmul_nt(t_n, net.param(name + ".h_v.tgt")), ns);
  Var v_s = tp.tile_rows(tp.matmul_nt(s_n, net.param(name + ".h_v.src")), nt);
  Var v_e = tp.matmul_nt(e_n, net.param(name + ".h_v.edge"));
  Var v = tp.add_row(tp.add(tp.add(v_t, v_s), v_e), net.param(name + ".h_v.bias"));

  Var scores = tp.scale(tp.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  Var weights = tp.softmax_rows(scores, blocked);
  Var agg = tp.pair_aggregate(weights, v);

  Var x_new = tp.add(x_tgt, net.mlp(tp.add(t_n, agg), name + ".mlp_x"));
  Var e_new = update_edges ? tp.add(edge, net.mlp(tp.concat_cols({v, e_n}), name + ".mlp_e")) : edge;
  return {x_new, e_new};
}

Matrix time_features(int t, int d) {
  Matrix f(1, d);
  const int half = d / 2;
  for (int k = 0; k < half; ++k) {
    double freq = std::exp(-std::log(10000.0) * k / half);
    f(0, k) = std::sin(t * freq);
    f(0, half + k) = std::cos(t * freq);
  }
  return f;
}

ad::ParameterSet initial_parameters(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int d = config.d;
  ad::ParameterSet p;
  add_mlp(p, rng, "enc.object", kObjectGeomDim + config.object_feature_dim, d, d);
  add_mlp(p, rng, "enc.link", kPoseDim + config.link_embed_dim, d, d);
  add_mlp(p, rng, "enc.or_edge", kPoseDim, d, d);
  add_mlp(p, rng, "enc.rr_edge", kPoseDim, d, d);
  add_mlp(p, rng, "time", d, d, d);
  for (int l = 0; l < config.layers; ++l) {
    // edge tokens leaving the last layer feed nothing, so it has no edge update
    const bool last = l + 1 == config.layers;
    add_attention(p, rng, "layers." + std::to_string(l) + ".or", d, true, !last);
    add_attention(p, rng, "layers." + std::to_string(l) + ".rr", d, false, !last);
  }
  add_linear(p, rng, "head", config.layers * d, kPoseDim);
  return p;
}

}  // namespace

DenoiserModel DenoiserModel::init(const ModelConfig& config) {
  DenoiserModel m;
  m.config_ = config;
  m.params_ = initial_parameters(config);
  return m;
}

DenoiserModel DenoiserModel::from_parameters(const ModelConfig& config, ad::ParameterSet params) {
  ad::ParameterSet layout = initial_parameters(config);
  if (params.size() != layout.size())
    throw IntegrityError("expected " + std::to_string(layout.size()) + " parameter tensors, got " +
                         std::to_string(params.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const std::string& n = layout.name(i);
    if (!params.contains(n)) throw IntegrityError("missing parameter " + n);
    const Matrix& v = params.get(n);
    if (v.rows() != layout.value(i).rows() || v.cols() != layout.value(i).cols())
      throw IntegrityError("parameter " + n + " has the wrong shape");
    if (!v.allFinite()) throw IntegrityError("parameter " + n + " is not finite");
    layout.value(i) = v;
  }
  DenoiserModel m;
  m.config_ = config;
  m.params_ = std::move(layout);
  return m;
}

Var DenoiserModel::forward(Tape& tape, const graph::TroGraph& g, int t) const {
  const int d = config_.d;
  const auto& objects = g.objects();
  const auto& links = g.links();
  if (objects.features.cols() != config_.object_feature_dim)
    throw InvalidArgument("object feature width " + std::to_string(objects.features.cols()) + " does not match model");
  if (links.geom.cols() != config_.link_embed_dim)
    throw InvalidArgument("link embedding width " + std::to_string(links.geom.cols()) + " does not match model");
  const std::vector<int> rows = links.real_rows();
  const Eigen::Index lr = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index np = objects.patch_count();
  if (lr == 0) throw InvalidArgument("graph has no real links");

  Matrix obj_in = objects.node_matrix();
  Matrix link_in(lr, kPoseDim + config_.link_embed_dim);
  Matrix or_in(lr * np, kPoseDim);
  Matrix rr_in = Matrix::Zero(lr * lr, kPoseDim);
  for (Eigen::Index a = 0; a < lr; ++a) {
    link_in.row(a) << links.poses.row(rows[a]), links.geom.row(rows[a]);
    for (Eigen::Index i = 0; i < np; ++i)
      or_in.row(a * np + i) = g.edges().object_link_edge(static_cast<int>(i), rows[a]).transpose();
    for (Eigen::Index b = 0; b < lr; ++b)
      if (a != b) rr_in.row(a * lr + b) = g.edges().link_link_edge(rows[a], rows[b]).transpose();
  }

  Net net{tape, params_};
  Var phi = net.mlp(tape.constant(time_features(t, d)), "time");
  Var x_obj = tape.add_row(net.mlp(tape.constant(std::move(obj_in)), "enc.object"), phi);
  Var x_link = tape.add_row(net.mlp(tape.constant(std::move(link_in)), "enc.link"), phi);
  Var e_or = tape.add_row(net.mlp(tape.constant(std::move(or_in)), "enc.or_edge"), phi);
  Var e_rr = tape.add_row(net.mlp(tape.constant(std::move(rr_in)), "enc.rr_edge"), phi);

  auto diagonal = [](Eigen::Index i, Eigen::Index j) { return i == j; };
  std::vector<Var> per_layer;
  for (int l = 0; l < config_.layers; ++l) {
    const std::string base = "layers." + std::to_string(l);
    const bool last = l + 1 == config_.layers;
    std::tie(x_link, e_or) = attention(net, base + ".or", x_link, x_obj, e_or, d, false, {}, !last);
    std::tie(x_link, e_rr) = attention(net, base + ".rr", x_link, x_link, e_rr, d, true, diagonal, !last);
    per_layer.push_back(x_link);
  }
  return net.linear(tape.concat_cols(per_layer), "head");
}

PoseMatrix DenoiserModel::forward(const graph::TroGraph& g, int t) const {
  Tape tape(false);
  Var out = forward(tape, g, t);
  PoseMatrix eps = PoseMatrix::Zero(g.link_pad(), kPoseDim);
  const auto rows = g.links().real_rows();
  for (std::size_t a = 0; a < rows.size(); ++a) eps.row(rows[a]) = out.value().row(static_cast<Eigen::Index>(a));
  return eps;
}

double loss(const PoseMatrix& eps_true, const PoseMatrix& eps_pred, const graph::LinkMask& mask, double gamma_p,
            double gamma_r) {
  if (eps_true.rows() != eps_pred.rows() || eps_true.rows() != static_cast<Eigen::Index>(mask.size()))
    throw InvalidArgument("loss: shape mismatch");
  double total = 0.0;
  for (Eigen::Index r = 0; r < eps_true.rows(); ++r) {
    if (!mask[r]) continue;
    auto diff = eps_true.row(r) - eps_pred.row(r);
    total += gamma_p * diff.head<3>().squaredNorm() + gamma_r * diff.tail<3>().squaredNorm();
  }
  return total;
}

namespace {
Eigen::RowVectorXd column_weights(double gamma_p, double gamma_r) {
  Eigen::RowVectorXd w(kPoseDim);
  w << gamma_p, gamma_p, gamma_p, gamma_r, gamma_r, gamma_r;
  return w;
}
}  // namespace

LossGrad backward(const DenoiserModel& model, const graph::TroGraph& g_t, int t, const PoseMatrix& eps_true,
                  double gamma_p, double gamma_r) {
  if (eps_true.rows() != g_t.link_pad()) throw InvalidArgument("backward: noise rows do not match graph");
  const auto rows = g_t.links().real_rows();
  Matrix target(static_cast<Eigen::Index>(rows.size()), kPoseDim);
  for (std::size_t a = 0; a < rows.size(); ++a) target.row(static_cast<Eigen::Index>(a)) = eps_true.row(rows[a]);
  Tape tape(true);
  Var pred = model.forward(tape, g_t, t);
  Var l = tape.weighted_sq_error(pred, target, column_weights(gamma_p, gamma_r));
  tape.backward(l);
  return {l.value()(0, 0), tape.parameter_gradients()};
}

void TrainConfig::validate() const {
  if (!(gamma_p >= 0.0) || !(gamma_r >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("train.lr_decay must be in (0, 1]");
  if (decay_epochs < 1) throw ConfigError("train.decay_epochs must be >= 1");
  if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"gamma_p", gamma_p},   {"gamma_r", gamma_r},   {"epochs", epochs},
          {"batch_size", batch_size}, {"lr", lr},         {"lr_decay", lr_decay},
          {"decay_epochs", decay_epochs}, {"max_steps", max_steps}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.gamma_p = j.value("gamma_p", c.gamma_p);
  c.gamma_r = j.value("gamma_r", c.gamma_r);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.decay_epochs = j.value("decay_epochs", c.decay_epochs);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

int steps_per_epoch(std::size_t dataset_size, int batch_size) {
  return static_cast<int>((dataset_size + static_cast<std::size_t>(batch_size) - 1) / batch_size);
}

double learning_rate(const TrainConfig& c, int epoch) {
  return c.lr * std::pow(c.lr_decay, epoch / c.decay_epochs);
}

namespace {
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::stream(seed, 2 * static_cast<std::uint64_t>(epoch) + 1);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, i - 1))]);
  return order;
}
}  // namespace

TrainResult train(DenoiserModel& model, AdamState& state, const std::vector<graph::TroGraph>& dataset,
                  const diffusion::Schedule& schedule, const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw InvalidArgument("training dataset is empty");
  ad::ParameterSet& params = model.params();
  if (state.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
      state.v.push_back(state.m.back());
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("optimizer state does not match model");

  const int spe = steps_per_epoch(dataset.size(), config.batch_size);
  const long total = config.max_steps > 0 ? config.max_steps : static_cast<long>(config.epochs) * spe;
  constexpr double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;

  TrainResult result;
  int cached_epoch = -1;
  std::vector<std::size_t> order;
  std::vector<Matrix> acc(params.size());
  for (long step = state.step; step < total; ++step) {
    const int epoch = static_cast<int>(step / spe);
    const int within = static_cast<int>(step % spe);
    if (epoch != cached_epoch) {
      order = epoch_order(config.seed, epoch, dataset.size());
      cached_epoch = epoch;
    }
    const std::size_t lo = static_cast<std::size_t>(within) * config.batch_size;
    const std::size_t hi = std::min(dataset.size(), lo + static_cast<std::size_t>(config.batch_size));
    const double inv_b = 1.0 / static_cast<double>(hi - lo);

    for (std::size_t i = 0; i < params.size(); ++i) acc[i] = Matrix::Zero(params.value(i).rows(), params.value(i).cols());
    Rng rng = Rng::stream(config.seed, 2 * static_cast<std::uint64_t>(step) + 2);
    double batch_loss = 0.0;
    try {
      for (std::size_t b = lo; b < hi; ++b) {
        const graph::TroGraph& g0 = dataset[order[b]];
        int t = static_cast<int>(rng.uniform_int(1, schedule.T));
        auto noised = diffusion::forward_noise(g0.links().poses, g0.links().mask, t, schedule, rng);
        auto lg = backward(model, g0.with_link_poses(noised.psi_t), t, noised.epsilon, config.gamma_p, config.gamma_r);
        batch_loss += lg.loss * inv_b;
        for (auto& [name, g] : lg.grads) acc[params.index_of(name)] += inv_b * g;
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.message = e.what();
      break;
    }
    if (!std::isfinite(batch_loss)) {
      result.diverged = true;
      result.message = "loss became non-finite at step " + std::to_string(step);
      break;
    }
    const double lr = learning_rate(config, epoch);
    const long k = step + 1;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(k));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(k));
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i] = b1 * state.m[i] + (1.0 - b1) * acc[i];
      state.v[i] = b2 * state.v[i] + (1.0 - b2) * acc[i].cwiseProduct(acc[i]);
      params.value(i).array() -=
          lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + adam_eps);
    }
    state.step = k;
    result.trace.push_back({step, epoch, lr, batch_loss});
  }
  return result;
}

double smoothed_loss(const std::vector<TraceEntry>& trace, bool head, std::size_t window) {
  if (trace.empty()) return 0.0;
  window = std::min(window, trace.size());
  double s = 0.0;
  for (std::size_t i = 0; i < window; ++i) s += trace[head ? i : trace.size() - window + i].loss;
  return s / static_cast<double>(window);
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

constexpr char kMagic[4] = {'T', 'R', 'O', '1'};

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) throw ParseError("checkpoint truncated", 0);
  return v;
}

void put_tensor(std::ostream& out, const std::string& name, const Matrix& m) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size()));
}

std::filesystem::path sidecar(const std::filesystem::path& p) { return p.string() + ".json"; }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DenoiserModel& model, const TrainConfig& train,
                     const AdamState* adam) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write checkpoint " + path.string());
  const auto& p = model.params();
  out.write(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  const bool with_adam = adam && !adam->m.empty();
  put_u32(out, static_cast<std::uint32_t>(p.size() * (with_adam ? 3 : 1)));
  for (std::size_t i = 0; i < p.size(); ++i) put_tensor(out, "param/" + p.name(i), p.value(i));
  if (with_adam) {
    for (std::size_t i = 0; i < p.size(); ++i) put_tensor(out, "adam.m/" + p.name(i), adam->m[i]);
    for (std::size_t i = 0; i < p.size(); ++i) put_tensor(out, "adam.v/" + p.name(i), adam->v[i]);
  }
  if (!out) throw NumericError("failed writing checkpoint " + path.string());

  nlohmann::json side = {{"schema_version", kCheckpointVersion},
                         {"format", "TRO1"},
                         {"model", model.config().to_json()},
                         {"train", train.to_json()},
                         {"parameter_count", model.parameter_count()},
                         {"adam_step", with_adam ? nlohmann::json(adam->step) : nlohmann::json(nullptr)}};
  std::ofstream js(sidecar(path));
  js << side.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not a TRO1 checkpoint", 0);
  if (std::uint32_t v = get_u32(in); v != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(v), 0);
  std::ifstream js(sidecar(path));
  if (!js) throw InvalidArgument("missing checkpoint sidecar " + sidecar(path).string());
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(js);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("checkpoint sidecar: ") + e.what(), 0);
  }
  Checkpoint ck;
  ck.model = ModelConfig::from_json(side.at("model"));
  ck.train = TrainConfig::from_json(side.at("train"));

  const std::uint32_t count = get_u32(in);
  ad::ParameterSet raw, m, v;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = get_u32(in);
    if (len > 4096) throw ParseError("checkpoint tensor name too long", 0);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ParseError("checkpoint truncated", 0);
    std::uint32_t rows = get_u32(in), cols = get_u32(in);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
    if (!in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(sizeof(double) * rm.size())))
      throw ParseError("checkpoint truncated in " + name, 0);
    auto slash = name.find('/');
    if (slash == std::string::npos) throw ParseError("bad tensor name " + name, 0);
    std::string kind = name.substr(0, slash), key = name.substr(slash + 1);
    if (kind == "param")
      raw.add(key, rm);
    else if (kind == "adam.m")
      m.add(key, rm);
    else if (kind == "adam.v")
      v.add(key, rm);
    else
      throw ParseError("unknown tensor kind " + kind, 0);
  }
  DenoiserModel model = DenoiserModel::from_parameters(ck.model, std::move(raw));
  ck.params = model.params();
  if (m.size() > 0) {
    AdamState st;
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      st.m.push_back(m.get(ck.params.name(i)));
      st.v.push_back(v.get(ck.params.name(i)));
    }
    st.step = side.at("adam_step").get<long>();
    ck.adam = std::move(st);
  }
  return ck;
}

diffusion::NoisePredictor oracle_denoiser(const PoseMatrix& psi0, const diffusion::Schedule& schedule) {
  std::vector<double> abar = schedule.alpha_bar;
  return [psi0, abar](const graph::TroGraph& g, int t) -> PoseMatrix {
    if (t <= 0 || t >= static_cast<int>(abar.size()))
      throw InvalidArgument("oracle denoiser is undefined at t=" + std::to_string(t));
    if (g.links().poses.rows() != psi0.rows()) throw InvalidArgument("oracle pose rows do not match graph");
    const double a = abar[t];
    PoseMatrix eps = (g.links().poses - std::sqrt(a) * psi0) / std::sqrt(1.0 - a);
    for (int r = 0; r < g.link_pad(); ++r)
      if (!g.links().mask[r]) eps.row(r).setZero();
    return eps;
  };
}

diffusion::NoisePredictor as_predictor(const DenoiserModel& model) {
  return [&model](const graph::TroGraph& g, int t) { return model.forward(g, t); };
}

}  // namespace tro::denoise
