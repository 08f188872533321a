#include "ps/forecast.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>

#include "ps/json_io.hpp"
#include "ps/rng.hpp"

namespace ps::forecast {

using dataset::WindowSample;

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Persistence: return "persistence";
    case ModelKind::Linear: return "linear";
    case ModelKind::MLP: return "mlp";
    case ModelKind::LSTM: return "lstm";
  }
  return "lstm";
}

std::string_view to_string(OutputHead h) { return h == OutputHead::Raw ? "raw" : "logits"; }

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::MSE: return "mse";
    case LossKind::MAE: return "mae";
    case LossKind::BCEL: return "bcel";
  }
  return "mse";
}

ModelKind model_kind_from_string(std::string_view s) {
  for (auto k : {ModelKind::Persistence, ModelKind::Linear, ModelKind::MLP, ModelKind::LSTM})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::Config, "unknown model kind '" + std::string(s) + "'");
}

LossKind loss_kind_from_string(std::string_view s) {
  for (auto k : {LossKind::MSE, LossKind::MAE, LossKind::BCEL})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::Config, "unknown loss '" + std::string(s) + "'");
}

ModelSpec ModelSpec::persistence(std::size_t n, int lookback, int horizon) {
  ModelSpec s;
  s.kind = ModelKind::Persistence;
  s.input_dim = n;
  s.lookback = lookback;
  s.horizon = horizon;
  s.hidden = 0;
  s.layers = 0;
  return s;
}

ModelSpec ModelSpec::linear(std::size_t n, int lookback, int horizon) {
  auto s = persistence(n, lookback, horizon);
  s.kind = ModelKind::Linear;
  return s;
}

ModelSpec ModelSpec::mlp(std::size_t n, int lookback, int horizon, int hidden) {
  auto s = persistence(n, lookback, horizon);
  s.kind = ModelKind::MLP;
  s.hidden = hidden;
  s.layers = 1;
  return s;
}

ModelSpec ModelSpec::lstm(std::size_t n, int lookback, int horizon, int hidden, int layers) {
  auto s = persistence(n, lookback, horizon);
  s.kind = ModelKind::LSTM;
  s.hidden = hidden;
  s.layers = layers;
  return s;
}

void ModelSpec::validate() const {
  if (input_dim == 0 || lookback < 1 || horizon < 1 || gap < 0)
    throw Error(ErrorCode::Config, "model spec needs N >= 1, L_b >= 1, L_f >= 1, G >= 0");
  if (kind == ModelKind::MLP && hidden < 1) throw Error(ErrorCode::Config, "MLP hidden width must be >= 1");
  if (kind == ModelKind::LSTM && (hidden < 1 || layers < 1))
    throw Error(ErrorCode::Config, "LSTM needs hidden >= 1 and layers >= 1");
}

std::size_t param_count(const ModelSpec& s) {
  const std::size_t flat = static_cast<std::size_t>(s.lookback) * s.input_dim;
  const auto lf = static_cast<std::size_t>(s.horizon);
  const auto h = static_cast<std::size_t>(std::max(s.hidden, 0));
  switch (s.kind) {
    case ModelKind::Persistence: return 0;
    case ModelKind::Linear: return flat * lf + lf;
    case ModelKind::MLP: return flat * h + h + h * lf + lf;
    case ModelKind::LSTM: {
      std::size_t total = 0;
      for (int l = 0; l < s.layers; ++l) {
        const std::size_t in = l == 0 ? s.input_dim : h;
        total += 4 * (h * in + h * h + 2 * h);
      }
      return total + h * lf + lf;
    }
  }
  return 0;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !(clip_value > 0) || !(clip_norm > 0) || batch_size == 0 ||
      max_epochs < 1 || !(lr_gamma > 0) || early_stop.patience < 1 || early_stop.min_delta < 0)
    throw Error(ErrorCode::Config, "training hyper-parameters must be positive (patience >= 1)");
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
  return cfg.learning_rate * std::pow(cfg.lr_gamma, epoch);
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMap = Eigen::Map<const Mat>;
using MMap = Eigen::Map<Mat>;
using Index = Eigen::Index;

// Inputs laid out time-major: column t * B + b holds sample b at look-back tick t.
struct Batch {
  Index size = 0;
  Mat x;
  Mat y;
  Eigen::RowVectorXd reference;
};

Batch make_batch(const ModelSpec& spec, std::span<const WindowSample* const> windows) {
  Batch batch;
  batch.size = static_cast<Index>(windows.size());
  const auto n = static_cast<Index>(spec.input_dim);
  const Index lb = spec.lookback, lf = spec.horizon, bsz = batch.size;
  batch.x.resize(n, lb * bsz);
  batch.y.resize(lf, bsz);
  batch.reference.resize(bsz);
  for (Index b = 0; b < bsz; ++b) {
    const auto& w = *windows[static_cast<std::size_t>(b)];
    if (w.n_features != spec.input_dim || w.geometry.lookback != spec.lookback ||
        w.geometry.horizon != spec.horizon ||
        w.lookback.size() != spec.input_dim * static_cast<std::size_t>(spec.lookback) ||
        w.target.size() != static_cast<std::size_t>(spec.horizon))
      throw Error(ErrorCode::Geometry, "window shape does not match the model spec");
    for (Index t = 0; t < lb; ++t)
      std::memcpy(batch.x.col(t * bsz + b).data(), w.lookback.data() + t * n,
                  static_cast<std::size_t>(n) * sizeof(double));
    std::memcpy(batch.y.col(b).data(), w.target.data(), static_cast<std::size_t>(lf) * sizeof(double));
    batch.reference(b) = w.reference_permit;
  }
  return batch;
}

Batch make_batch(const ModelSpec& spec, std::span<const WindowSample> windows) {
  std::vector<const WindowSample*> ptrs;
  ptrs.reserve(windows.size());
  for (const auto& w : windows) ptrs.push_back(&w);
  return make_batch(spec, ptrs);
}

template <typename S>
S sigmoid(S z) {
  if (z >= 0) return S(1) / (S(1) + std::exp(-z));
  const S e = std::exp(z);
  return e / (S(1) + e);
}

template <typename S>
S element_loss(LossKind kind, S y, S t) {
  switch (kind) {
    case LossKind::MSE: return (y - t) * (y - t);
    case LossKind::MAE: return std::abs(y - t);
    case LossKind::BCEL: return std::max(y, S(0)) - y * t + std::log1p(std::exp(-std::abs(y)));
  }
  return S(0);
}

double element_grad(LossKind kind, double y, double t) {
  switch (kind) {
    case LossKind::MSE: return 2.0 * (y - t);
    case LossKind::MAE: return y > t ? 1.0 : (y < t ? -1.0 : 0.0);
    case LossKind::BCEL: return sigmoid(y) - t;
  }
  return 0.0;
}

// Sequential parameter cursor over the flat vector.
template <typename Ptr>
class Cursor {
  using S = std::remove_const_t<std::remove_pointer_t<Ptr>>;
  static constexpr bool kConst = std::is_const_v<std::remove_pointer_t<Ptr>>;
  using M = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using V = Eigen::Matrix<S, Eigen::Dynamic, 1>;

 public:
  explicit Cursor(Ptr base) : p_(base) {}
  auto mat(Index rows, Index cols) {
    auto m = Eigen::Map<std::conditional_t<kConst, const M, M>>(p_, rows, cols);
    p_ += rows * cols;
    return m;
  }
  auto vec(Index n) {
    auto v = Eigen::Map<std::conditional_t<kConst, const V, V>>(p_, n);
    p_ += n;
    return v;
  }

 private:
  Ptr p_;
};

template <typename S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
struct LstmLayerCacheT {
  MatT<S> gates;  // 4h x (L_b B), activated: i, f, g, o
  MatT<S> c;      // h x (L_b B)
  MatT<S> tc;     // tanh(c)
  MatT<S> h;      // h x (L_b B)
};

template <typename S>
struct ForwardT {
  MatT<S> y;
  MatT<S> hidden;  // MLP activations
  std::vector<LstmLayerCacheT<S>> lstm;
};

using Forward = ForwardT<double>;

template <typename S>
ForwardT<S> run_forward(const ModelSpec& spec, const S* params, const MatT<S>& x,
                        const Eigen::Matrix<S, 1, Eigen::Dynamic>& reference, bool keep) {
  ForwardT<S> out;
  const Index bsz = reference.size(), lb = spec.lookback, lf = spec.horizon;
  const auto n = static_cast<Index>(spec.input_dim);
  Cursor<const S*> cur(params);
  switch (spec.kind) {
    case ModelKind::Persistence:
      out.y = reference.replicate(lf, 1);
      break;
    case ModelKind::Linear: {
      auto w = cur.mat(lf, lb * n);
      auto b = cur.vec(lf);
      out.y = b.replicate(1, bsz);
      for (Index t = 0; t < lb; ++t) out.y.noalias() += w.middleCols(t * n, n) * x.middleCols(t * bsz, bsz);
      break;
    }
    case ModelKind::MLP: {
      const Index h = spec.hidden;
      auto w1 = cur.mat(h, lb * n);
      auto b1 = cur.vec(h);
      auto w2 = cur.mat(lf, h);
      auto b2 = cur.vec(lf);
      MatT<S> a = b1.replicate(1, bsz);
      for (Index t = 0; t < lb; ++t) a.noalias() += w1.middleCols(t * n, n) * x.middleCols(t * bsz, bsz);
      out.hidden = a.array().tanh().matrix();
      out.y = b2.replicate(1, bsz);
      out.y.noalias() += w2 * out.hidden;
      if (!keep) out.hidden.resize(0, 0);
      break;
    }
    case ModelKind::LSTM: {
      const Index h = spec.hidden;
      const MatT<S>* input = &x;
      out.lstm.resize(static_cast<std::size_t>(spec.layers));
      for (int l = 0; l < spec.layers; ++l) {
        const Index in = l == 0 ? n : h;
        auto wx = cur.mat(4 * h, in);
        auto wh = cur.mat(4 * h, h);
        auto bx = cur.vec(4 * h);
        auto bh = cur.vec(4 * h);
        auto& c = out.lstm[static_cast<std::size_t>(l)];
        c.gates.noalias() = wx * *input;
        c.gates.colwise() += bx + bh;
        c.c.resize(h, lb * bsz);
        c.tc.resize(h, lb * bsz);
        c.h.resize(h, lb * bsz);
        for (Index t = 0; t < lb; ++t) {
          auto z = c.gates.middleCols(t * bsz, bsz);
          if (t > 0) z.noalias() += wh * c.h.middleCols((t - 1) * bsz, bsz);
          z.topRows(h) = z.topRows(h).unaryExpr([](S v) { return sigmoid(v); });
          z.middleRows(h, h) = z.middleRows(h, h).unaryExpr([](S v) { return sigmoid(v); });
          z.middleRows(2 * h, h) = z.middleRows(2 * h, h).array().tanh().matrix();
          z.bottomRows(h) = z.bottomRows(h).unaryExpr([](S v) { return sigmoid(v); });
          auto ct = c.c.middleCols(t * bsz, bsz);
          ct = z.topRows(h).cwiseProduct(z.middleRows(2 * h, h));
          if (t > 0) ct += z.middleRows(h, h).cwiseProduct(c.c.middleCols((t - 1) * bsz, bsz));
          c.tc.middleCols(t * bsz, bsz) = ct.array().tanh().matrix();
          c.h.middleCols(t * bsz, bsz) = z.bottomRows(h).cwiseProduct(c.tc.middleCols(t * bsz, bsz));
        }
        input = &c.h;
      }
      auto wo = cur.mat(lf, h);
      auto bo = cur.vec(lf);
      out.y = bo.replicate(1, bsz);
      out.y.noalias() += wo * out.lstm.back().h.middleCols((lb - 1) * bsz, bsz);
      if (!keep) out.lstm.clear();
      break;
    }
  }
  return out;
}

Forward run_forward(const ModelSpec& spec, const double* params, const Batch& batch, bool keep) {
  return run_forward<double>(spec, params, batch.x, batch.reference, keep);
}

// Mean loss evaluated entirely in scalar type S.
template <typename S>
S batch_loss(const ModelSpec& spec, const S* params, const MatT<S>& x, const MatT<S>& y,
             const Eigen::Matrix<S, 1, Eigen::Dynamic>& reference, LossKind kind) {
  const auto fwd = run_forward<S>(spec, params, x, reference, false);
  S total = 0;
  for (Index b = 0; b < y.cols(); ++b)
    for (Index k = 0; k < y.rows(); ++k) total += element_loss<S>(kind, fwd.y(k, b), y(k, b));
  return total / static_cast<S>(y.size());
}

double batch_loss_grad(const ModelSpec& spec, const double* params, const Batch& batch, LossKind kind,
                       double* grad) {
  const Index bsz = batch.size, lb = spec.lookback, lf = spec.horizon;
  const auto n = static_cast<Index>(spec.input_dim);
  auto fwd = run_forward(spec, params, batch, grad != nullptr);

  const double m = static_cast<double>(lf * bsz);
  double total = 0.0;
  Mat dy(lf, bsz);
  for (Index b = 0; b < bsz; ++b)
    for (Index k = 0; k < lf; ++k) {
      const double y = fwd.y(k, b), t = batch.y(k, b);
      total += element_loss(kind, y, t);
      dy(k, b) = element_grad(kind, y, t) / m;
    }
  if (grad == nullptr) return total / m;

  Cursor<const double*> pc(params);
  Cursor<double*> gc(grad);
  switch (spec.kind) {
    case ModelKind::Persistence:
      break;
    case ModelKind::Linear: {
      pc.mat(lf, lb * n);
      auto dw = gc.mat(lf, lb * n);
      auto db = gc.vec(lf);
      for (Index t = 0; t < lb; ++t)
        dw.middleCols(t * n, n).noalias() = dy * batch.x.middleCols(t * bsz, bsz).transpose();
      db = dy.rowwise().sum();
      break;
    }
    case ModelKind::MLP: {
      const Index h = spec.hidden;
      pc.mat(h, lb * n);
      pc.vec(h);
      auto w2 = pc.mat(lf, h);
      auto dw1 = gc.mat(h, lb * n);
      auto db1 = gc.vec(h);
      auto dw2 = gc.mat(lf, h);
      auto db2 = gc.vec(lf);
      dw2.noalias() = dy * fwd.hidden.transpose();
      db2 = dy.rowwise().sum();
      Mat da = (w2.transpose() * dy).cwiseProduct(
          (1.0 - fwd.hidden.array().square()).matrix());
      for (Index t = 0; t < lb; ++t)
        dw1.middleCols(t * n, n).noalias() = da * batch.x.middleCols(t * bsz, bsz).transpose();
      db1 = da.rowwise().sum();
      break;
    }
    case ModelKind::LSTM: {
      const Index h = spec.hidden;
      struct LayerViews {
        Eigen::Map<const Mat> wx, wh;
        Eigen::Map<Mat> dwx, dwh;
        Eigen::Map<Vec> dbx, dbh;
      };
      std::vector<LayerViews> views;
      for (int l = 0; l < spec.layers; ++l) {
        const Index in = l == 0 ? n : h;
        auto wx = pc.mat(4 * h, in);
        auto wh = pc.mat(4 * h, h);
        pc.vec(4 * h);
        pc.vec(4 * h);
        auto dwx = gc.mat(4 * h, in);
        auto dwh = gc.mat(4 * h, h);
        auto dbx = gc.vec(4 * h);
        auto dbh = gc.vec(4 * h);
        views.push_back({wx, wh, dwx, dwh, dbx, dbh});
      }
      auto wo = pc.mat(lf, h);
      auto dwo = gc.mat(lf, h);
      auto dbo = gc.vec(lf);
      const auto& top = fwd.lstm.back();
      dwo.noalias() = dy * top.h.middleCols((lb - 1) * bsz, bsz).transpose();
      dbo = dy.rowwise().sum();

      Mat dh_out = Mat::Zero(h, lb * bsz);
      dh_out.middleCols((lb - 1) * bsz, bsz).noalias() = wo.transpose() * dy;

      for (int l = spec.layers - 1; l >= 0; --l) {
        const auto& c = fwd.lstm[static_cast<std::size_t>(l)];
        auto& v = views[static_cast<std::size_t>(l)];
        Mat dz(4 * h, lb * bsz);
        Mat dh_next = Mat::Zero(h, bsz);
        Mat dc_next = Mat::Zero(h, bsz);
        for (Index t = lb - 1; t >= 0; --t) {
          const auto g = c.gates.middleCols(t * bsz, bsz);
          const auto gi = g.topRows(h).array();
          const auto gf = g.middleRows(h, h).array();
          const auto gg = g.middleRows(2 * h, h).array();
          const auto go = g.bottomRows(h).array();
          const auto tc = c.tc.middleCols(t * bsz, bsz).array();
          const Eigen::ArrayXXd dh = dh_out.middleCols(t * bsz, bsz).array() + dh_next.array();
          const Eigen::ArrayXXd dc = dh * go * (1.0 - tc.square()) + dc_next.array();
          auto dzt = dz.middleCols(t * bsz, bsz);
          dzt.topRows(h) = (dc * gg * gi * (1.0 - gi)).matrix();
          if (t > 0)
            dzt.middleRows(h, h) =
                (dc * c.c.middleCols((t - 1) * bsz, bsz).array() * gf * (1.0 - gf)).matrix();
          else
            dzt.middleRows(h, h).setZero();
          dzt.middleRows(2 * h, h) = (dc * gi * (1.0 - gg.square())).matrix();
          dzt.bottomRows(h) = (dh * tc * go * (1.0 - go)).matrix();
          dc_next = (dc * gf).matrix();
          dh_next.noalias() = v.wh.transpose() * dzt;
        }
        const Mat& input = l == 0 ? batch.x : fwd.lstm[static_cast<std::size_t>(l - 1)].h;
        v.dwx.noalias() = dz * input.transpose();
        if (lb > 1)
          v.dwh.noalias() = dz.rightCols((lb - 1) * bsz) * c.h.leftCols((lb - 1) * bsz).transpose();
        else
          v.dwh.setZero();
        v.dbx = dz.rowwise().sum();
        v.dbh = v.dbx;
        if (l > 0) dh_out.noalias() = v.wx.transpose() * dz;
      }
      break;
    }
  }
  return total / m;
}

void fill_uniform(std::span<double> out, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : out) v = u(rng);
}

}  // namespace

TrainedModel zero_model(const ModelSpec& spec) {
  spec.validate();
  TrainedModel m;
  m.spec = spec;
  m.params.assign(param_count(spec), 0.0);
  return m;
}

TrainedModel init_model(const ModelSpec& spec, std::uint64_t seed) {
  auto m = zero_model(spec);
  std::mt19937_64 rng(derive_seed(seed, {0x1417}));
  std::span<double> p(m.params);
  std::size_t off = 0;
  auto take = [&](std::size_t count, double fan_in) {
    fill_uniform(p.subspan(off, count), 1.0 / std::sqrt(fan_in), rng);
    off += count;
  };
  const std::size_t flat = spec.input_dim * static_cast<std::size_t>(spec.lookback);
  const auto lf = static_cast<std::size_t>(spec.horizon);
  const auto h = static_cast<std::size_t>(std::max(spec.hidden, 0));
  switch (spec.kind) {
    case ModelKind::Persistence: break;
    case ModelKind::Linear:
      take(flat * lf + lf, static_cast<double>(flat));
      break;
    case ModelKind::MLP:
      take(flat * h + h, static_cast<double>(flat));
      take(h * lf + lf, static_cast<double>(h));
      break;
    case ModelKind::LSTM:
      for (int l = 0; l < spec.layers; ++l) {
        const std::size_t in = l == 0 ? spec.input_dim : h;
        take(4 * h * in, static_cast<double>(in));
        take(4 * h * h + 8 * h, static_cast<double>(h));
      }
      take(h * lf + lf, static_cast<double>(h));
      break;
  }
  return m;
}

std::vector<std::vector<double>> forward_batch(const TrainedModel& model,
                                               std::span<const WindowSample> windows) {
  model.spec.validate();
  if (model.params.size() != param_count(model.spec))
    throw Error(ErrorCode::Shape, "parameter vector length does not match the model spec");
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  constexpr std::size_t kChunk = 512;
  for (std::size_t begin = 0; begin < windows.size(); begin += kChunk) {
    const auto chunk = windows.subspan(begin, std::min(kChunk, windows.size() - begin));
    const auto batch = make_batch(model.spec, chunk);
    const auto fwd = run_forward(model.spec, model.params.data(), batch, false);
    for (Index b = 0; b < batch.size; ++b)
      out.emplace_back(fwd.y.col(b).data(), fwd.y.col(b).data() + fwd.y.rows());
  }
  return out;
}

std::vector<double> forward(const TrainedModel& model, const WindowSample& window) {
  return forward_batch(model, std::span(&window, 1)).front();
}

double loss(LossKind kind, std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.empty() || predictions.size() != targets.size())
    throw Error(ErrorCode::Invariant, "loss needs equal-length, non-empty vectors");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    total += element_loss(kind, predictions[i], targets[i]);
  return total / static_cast<double>(predictions.size());
}

double loss_and_gradient(const ModelSpec& spec, std::span<const double> params,
                         std::span<const WindowSample> windows, LossKind kind, std::span<double> gradient) {
  spec.validate();
  const auto count = param_count(spec);
  if (params.size() != count || gradient.size() != count)
    throw Error(ErrorCode::Shape, "parameter/gradient length does not match the model spec");
  if (windows.empty()) throw Error(ErrorCode::Invariant, "empty batch");
  const auto batch = make_batch(spec, windows);
  return batch_loss_grad(spec, params.data(), batch, kind, gradient.data());
}

void clip_gradient(std::span<double> gradient, double clip_value, double clip_norm) {
  double sq = 0.0;
  for (auto& g : gradient) {
    g = std::clamp(g, -clip_value, clip_value);
    sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (auto& g : gradient) g *= scale;
  }
}

double grad_check(const ModelSpec& spec, const WindowSample& sample, LossKind kind, std::uint64_t seed) {
  auto model = init_model(spec, seed);
  auto& p = model.params;
  std::vector<double> analytic(p.size());
  const std::span one(&sample, 1);
  loss_and_gradient(spec, p, one, kind, analytic);

  // The difference quotient is formed in extended precision: with 64-bit
  // losses, rounding alone puts the quotient off by ~5e-12, which exceeds
  // 1e-4 relative for the smallest LSTM gradients.
  using Ext = long double;
  const auto batch = make_batch(spec, one);
  const MatT<Ext> x = batch.x.cast<Ext>();
  const MatT<Ext> y = batch.y.cast<Ext>();
  const Eigen::Matrix<Ext, 1, Eigen::Dynamic> ref = batch.reference.cast<Ext>();
  std::vector<Ext> q(p.begin(), p.end());
  constexpr double kStep = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Ext saved = q[i];
    q[i] = saved + kStep;
    const Ext up = batch_loss<Ext>(spec, q.data(), x, y, ref, kind);
    q[i] = saved - kStep;
    const Ext down = batch_loss<Ext>(spec, q.data(), x, y, ref, kind);
    q[i] = saved;
    const auto numeric = static_cast<double>((up - down) / (2 * Ext(kStep)));
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

struct Trainer::Impl {
  ModelSpec spec;
  TrainConfig cfg;
  std::span<const WindowSample> train;
  Batch val;
  std::vector<double> params, grad, m, v, best;
  std::vector<EpochRecord> history;
  std::vector<std::size_t> order;
  std::vector<const WindowSample*> scratch;
  std::mt19937_64 shuffle_rng;
  std::uint64_t step = 0;
  int epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int stale = 0;
  bool stopped = false;
};

Trainer::Trainer(const ModelSpec& spec, const TrainConfig& cfg, std::span<const WindowSample> train,
                 std::span<const WindowSample> val)
    : impl_(std::make_unique<Impl>()) {
  spec.validate();
  cfg.validate();
  if (train.empty() || val.empty()) throw Error(ErrorCode::Invariant, "training needs non-empty train and val sets");
  if (cfg.loss == LossKind::BCEL && spec.head != OutputHead::Logits)
    throw Error(ErrorCode::Config, "BCEL training requires a logits output head");
  auto& s = *impl_;
  s.spec = spec;
  s.cfg = cfg;
  s.train = train;
  s.val = make_batch(spec, val);
  s.params = init_model(spec, cfg.seed).params;
  s.grad.assign(s.params.size(), 0.0);
  s.m.assign(s.params.size(), 0.0);
  s.v.assign(s.params.size(), 0.0);
  s.best = s.params;
  s.order.resize(train.size());
  std::iota(s.order.begin(), s.order.end(), std::size_t{0});
  s.shuffle_rng.seed(derive_seed(cfg.seed, {0x5F1E}));
  // Validate training shapes up front so a bad window fails before epoch 0.
  make_batch(spec, train.subspan(0, 1));
}

Trainer::~Trainer() = default;

bool Trainer::done() const { return impl_->stopped || impl_->epoch >= impl_->cfg.max_epochs; }
int Trainer::epochs_run() const { return impl_->epoch; }

EpochRecord Trainer::run_epoch() {
  auto& s = *impl_;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  const double lr = learning_rate_at(s.cfg, s.epoch);
  std::shuffle(s.order.begin(), s.order.end(), s.shuffle_rng);

  double weighted = 0.0;
  for (std::size_t begin = 0; begin < s.order.size(); begin += s.cfg.batch_size) {
    const auto end = std::min(s.order.size(), begin + s.cfg.batch_size);
    s.scratch.clear();
    for (auto i = begin; i < end; ++i) s.scratch.push_back(&s.train[s.order[i]]);
    const auto batch = make_batch(s.spec, s.scratch);
    const double l = batch_loss_grad(s.spec, s.params.data(), batch, s.cfg.loss, s.grad.data());
    if (!std::isfinite(l))
      throw TrainingError(s.epoch, "non-finite training loss at epoch " + std::to_string(s.epoch));
    weighted += l * static_cast<double>(end - begin);
    clip_gradient(s.grad, s.cfg.clip_value, s.cfg.clip_norm);
    ++s.step;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < s.params.size(); ++i) {
      s.m[i] = kBeta1 * s.m[i] + (1.0 - kBeta1) * s.grad[i];
      s.v[i] = kBeta2 * s.v[i] + (1.0 - kBeta2) * s.grad[i] * s.grad[i];
      s.params[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + kEps);
    }
  }
  EpochRecord rec;
  rec.train_loss = weighted / static_cast<double>(s.order.size());
  rec.val_loss = batch_loss_grad(s.spec, s.params.data(), s.val, s.cfg.loss, nullptr);
  rec.learning_rate = lr;
  if (!std::isfinite(rec.val_loss))
    throw TrainingError(s.epoch, "non-finite validation loss at epoch " + std::to_string(s.epoch));
  s.history.push_back(rec);

  if (rec.val_loss < s.best_val - s.cfg.early_stop.min_delta) {
    s.best_val = rec.val_loss;
    s.best = s.params;
    s.best_epoch = s.epoch;
    s.stale = 0;
  } else if (++s.stale >= s.cfg.early_stop.patience) {
    s.stopped = true;
  }
  ++s.epoch;
  return rec;
}

TrainedModel Trainer::finish() {
  auto& s = *impl_;
  TrainedModel model;
  model.spec = s.spec;
  model.params = s.cfg.early_stop.restore_best && s.best_epoch >= 0 ? s.best : s.params;
  model.history = s.history;
  model.best_epoch = s.best_epoch;
  return model;
}

TrainedModel train(const ModelSpec& spec, std::span<const WindowSample> train_windows,
                   std::span<const WindowSample> val_windows, const TrainConfig& cfg) {
  Trainer trainer(spec, cfg, train_windows, val_windows);
  while (!trainer.done()) trainer.run_epoch();
  return trainer.finish();
}

nlohmann::json to_json(const ModelSpec& s) {
  return {{"kind", std::string(to_string(s.kind))}, {"input_dim", s.input_dim}, {"lookback", s.lookback},
          {"gap", s.gap}, {"horizon", s.horizon}, {"hidden", s.hidden}, {"layers", s.layers},
          {"output_head", std::string(to_string(s.head))}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.kind = model_kind_from_string(require(j, "kind").get<std::string>());
  s.input_dim = require(j, "input_dim").get<std::size_t>();
  s.lookback = require(j, "lookback").get<int>();
  s.gap = j.value("gap", 0);
  s.horizon = require(j, "horizon").get<int>();
  s.hidden = j.value("hidden", 0);
  s.layers = j.value("layers", 0);
  s.head = j.value("output_head", "raw") == "logits" ? OutputHead::Logits : OutputHead::Raw;
  return s;
}

namespace {
constexpr char kModelMagic[4] = {'P', 'S', 'M', '1'};
constexpr std::uint32_t kModelVersion = 1;
static_assert(std::endian::native == std::endian::little, "PSM1 encoding assumes little-endian");

template <typename T>
void append(std::vector<std::byte>& out, const T& v) {
  const auto* p = reinterpret_cast<const std::byte*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}
}  // namespace

std::vector<std::byte> encode_model(const TrainedModel& model) {
  if (model.params.size() != param_count(model.spec))
    throw Error(ErrorCode::Shape, "parameter vector length does not match the model spec");
  Json history = Json::array();
  for (const auto& r : model.history)
    history.push_back({{"train_loss", r.train_loss}, {"val_loss", r.val_loss}, {"lr", r.learning_rate}});
  const Json header = {{"version", kSchemaVersion}, {"spec", to_json(model.spec)}, {"history", history},
                       {"best_epoch", model.best_epoch}, {"n_params", model.params.size()}};
  const auto text = header.dump();
  std::vector<std::byte> out;
  out.reserve(12 + text.size() + model.params.size() * 8);
  for (char c : kModelMagic) out.push_back(static_cast<std::byte>(c));
  append(out, kModelVersion);
  append(out, static_cast<std::uint32_t>(text.size()));
  for (char c : text) out.push_back(static_cast<std::byte>(c));
  const auto* p = reinterpret_cast<const std::byte*>(model.params.data());
  out.insert(out.end(), p, p + model.params.size() * sizeof(double));
  return out;
}

TrainedModel decode_model(std::span<const std::byte> bytes) {
  if (bytes.size() < 12) throw Error(ErrorCode::Truncated, "PSM1 header truncated");
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw Error(ErrorCode::Format, "not a PSM1 model");
  std::uint32_t version = 0, length = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&length, bytes.data() + 8, 4);
  if (version > kModelVersion) throw Error(ErrorCode::UnsupportedVersion, "PSM1 version not supported");
  if (bytes.size() < 12 + std::size_t{length}) throw Error(ErrorCode::Truncated, "PSM1 header truncated");
  Json header;
  try {
    header = Json::parse(reinterpret_cast<const char*>(bytes.data() + 12),
                         reinterpret_cast<const char*>(bytes.data() + 12 + length));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::Format, std::string("PSM1 header: ") + e.what());
  }
  TrainedModel model;
  model.spec = model_spec_from_json(require(header, "spec"));
  model.best_epoch = header.value("best_epoch", -1);
  for (const auto& r : require(header, "history"))
    model.history.push_back({r.at("train_loss").get<double>(), r.at("val_loss").get<double>(),
                             r.at("lr").get<double>()});
  const auto n = require(header, "n_params").get<std::size_t>();
  if (n != param_count(model.spec)) throw Error(ErrorCode::Format, "PSM1 parameter count mismatch");
  const std::size_t offset = 12 + std::size_t{length};
  if (bytes.size() != offset + n * sizeof(double)) throw Error(ErrorCode::Truncated, "PSM1 parameters truncated");
  model.params.resize(n);
  std::memcpy(model.params.data(), bytes.data() + offset, n * sizeof(double));
  return model;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(std::as_bytes(std::span(raw)));
}

}  // namespace ps::forecast
