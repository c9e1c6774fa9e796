#include "fedgreen/widthnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedgreen/error.hpp"
#include "fedgreen/rng.hpp"

namespace fedgreen::widthnet {

ScalingRate::ScalingRate(double p) : p_(p) {
  if (!(p > 0.0 && p <= 1.0)) {
    fail(ErrorKind::invalid_input, "scaling rate must lie in (0, 1], got " + std::to_string(p));
  }
}

std::size_t kept_width(ScalingRate p, std::size_t full) {
  const double scaled = p.value() * static_cast<double>(full);
  const auto kept = static_cast<std::size_t>(std::ceil(scaled * (1.0 - 1e-9)));
  return std::clamp<std::size_t>(kept, 1, std::max<std::size_t>(full, 1));
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto &l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<std::size_t> Model::hidden_widths() const {
  std::vector<std::size_t> w;
  for (const auto &l : layers)
    if (l.shape.kind == LayerKind::hidden) w.push_back(l.shape.out_dim);
  return w;
}

void validate(const Model &model) {
  if (model.layers.empty()) fail(ErrorKind::invalid_shape, "model has no layers");
  if (model.input_dim == 0 || model.class_count == 0)
    fail(ErrorKind::invalid_shape, "input_dim and class_count must be >= 1");
  std::size_t expected_in = model.input_dim;
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const auto &l = model.layers[k];
    const bool last = k + 1 == model.layers.size();
    const std::string where = "layer " + std::to_string(k);
    if (l.shape.in_dim == 0 || l.shape.out_dim == 0)
      fail(ErrorKind::invalid_shape, where + " has a zero dimension");
    if (l.shape.in_dim != expected_in)
      fail(ErrorKind::invalid_shape, where + " in_dim does not match previous out_dim");
    if ((l.shape.kind == LayerKind::output) != last)
      fail(ErrorKind::invalid_shape, "exactly the last layer must be the output layer");
    if (l.weight.rows() != l.shape.out_dim || l.weight.cols() != l.shape.in_dim ||
        l.bias.size() != l.shape.out_dim)
      fail(ErrorKind::invalid_shape, where + " parameter storage disagrees with its shape");
    for (double v : l.weight.data())
      if (!std::isfinite(v)) fail(ErrorKind::numerical_failure, where + " has a non-finite weight");
    for (double v : l.bias)
      if (!std::isfinite(v)) fail(ErrorKind::numerical_failure, where + " has a non-finite bias");
    expected_in = l.shape.out_dim;
  }
  if (expected_in != model.class_count)
    fail(ErrorKind::invalid_shape, "output layer width does not match class_count");
}

namespace {

Layer make_layer(std::size_t in, std::size_t out, LayerKind kind) {
  return Layer{LayerShape{in, out, kind}, Matrix(out, in), std::vector<double>(out, 0.0)};
}

std::vector<LayerShape> shapes_for(std::size_t input_dim, std::span<const std::size_t> hidden,
                                   std::size_t class_count) {
  std::vector<LayerShape> shapes;
  std::size_t in = input_dim;
  for (auto w : hidden) {
    shapes.push_back({in, w, LayerKind::hidden});
    in = w;
  }
  shapes.push_back({in, class_count, LayerKind::output});
  return shapes;
}

void check_batch(const Model &model, const Matrix &batch) {
  if (batch.cols() != model.input_dim) {
    fail(ErrorKind::invalid_input, "batch has " + std::to_string(batch.cols()) +
                                       " columns, model expects " +
                                       std::to_string(model.input_dim));
  }
}

void check_labels(const Model &model, const Matrix &batch, std::span<const int> labels) {
  if (labels.size() != batch.rows())
    fail(ErrorKind::invalid_input, "label count does not match batch rows");
  if (labels.empty()) fail(ErrorKind::invalid_input, "empty batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= model.class_count)
      fail(ErrorKind::invalid_input, "label " + std::to_string(y) + " out of range");
  }
}

// z = a * W^T + b, row by row.
Matrix affine(const Layer &layer, const Matrix &a) {
  const std::size_t out = layer.shape.out_dim;
  const std::size_t in = layer.shape.in_dim;
  Matrix z(a.rows(), out);
  for (std::size_t b = 0; b < a.rows(); ++b) {
    const auto x = a.row(b);
    auto zr = z.row(b);
    for (std::size_t o = 0; o < out; ++o) {
      const auto w = layer.weight.row(o);
      double s = 0.0;
      for (std::size_t i = 0; i < in; ++i) s += w[i] * x[i];
      zr[o] = s + layer.bias[o];
    }
  }
  return z;
}

void relu_inplace(Matrix &m) {
  for (auto &v : m.data()) v = v > 0.0 ? v : 0.0;
}

// Activations of every layer; acts[0] is the input, acts[k+1] the output of
// layer k (post-rectifier for hidden layers, raw scores for the last one).
std::vector<Matrix> forward_all(const Model &model, const Matrix &batch) {
  std::vector<Matrix> acts;
  acts.reserve(model.layers.size() + 1);
  acts.push_back(batch);
  for (const auto &layer : model.layers) {
    Matrix z = affine(layer, acts.back());
    if (layer.shape.kind == LayerKind::hidden) relu_inplace(z);
    acts.push_back(std::move(z));
  }
  return acts;
}

// Per-row log-softmax cross-entropy; writes softmax probabilities into probs.
double cross_entropy(const Matrix &scores, std::span<const int> labels, Matrix *probs) {
  double total = 0.0;
  for (std::size_t b = 0; b < scores.rows(); ++b) {
    const auto s = scores.row(b);
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double v : s) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    total += log_z - s[static_cast<std::size_t>(labels[b])];
    if (probs) {
      auto pr = probs->row(b);
      for (std::size_t c = 0; c < s.size(); ++c) pr[c] = std::exp(s[c] - log_z);
    }
  }
  return total / static_cast<double>(scores.rows());
}

}  // namespace

Model init_model(std::size_t input_dim, std::span<const std::size_t> hidden_widths,
                 std::size_t class_count, std::uint64_t seed) {
  if (hidden_widths.empty()) fail(ErrorKind::invalid_shape, "hidden_widths must be nonempty");
  if (input_dim == 0 || class_count == 0 ||
      std::find(hidden_widths.begin(), hidden_widths.end(), 0u) != hidden_widths.end())
    fail(ErrorKind::invalid_shape, "zero dimension in model specification");

  Rng rng(derive_seed(seed, {kTagInit}));
  Model m;
  m.input_dim = input_dim;
  m.class_count = class_count;
  for (const auto &s : shapes_for(input_dim, hidden_widths, class_count)) {
    Layer layer = make_layer(s.in_dim, s.out_dim, s.kind);
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.in_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto &w : layer.weight.data()) w = dist(rng);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

Model zeros_like(const Model &reference) {
  Model z;
  z.input_dim = reference.input_dim;
  z.class_count = reference.class_count;
  for (const auto &l : reference.layers)
    z.layers.push_back(make_layer(l.shape.in_dim, l.shape.out_dim, l.shape.kind));
  return z;
}

Submodel extract_submodel(const Model &model, ScalingRate p) {
  validate(model);
  Submodel sub;
  sub.origin_p = p;
  sub.model.input_dim = model.input_dim;
  sub.model.class_count = model.class_count;
  std::size_t kept_in = model.input_dim;
  for (const auto &l : model.layers) {
    const std::size_t kept_out =
        l.shape.kind == LayerKind::hidden ? kept_width(p, l.shape.out_dim) : l.shape.out_dim;
    if (l.shape.kind == LayerKind::hidden) sub.kept.push_back(kept_out);
    Layer s = make_layer(kept_in, kept_out, l.shape.kind);
    for (std::size_t o = 0; o < kept_out; ++o) {
      const auto src = l.weight.row(o);
      std::copy_n(src.begin(), kept_in, s.weight.row(o).begin());
      s.bias[o] = l.bias[o];
    }
    sub.model.layers.push_back(std::move(s));
    kept_in = kept_out;
  }
  return sub;
}

Model embed_submodel(const Model &parent, const Submodel &sub) {
  validate(parent);
  const auto &sm = sub.model;
  if (sm.input_dim != parent.input_dim || sm.class_count != parent.class_count ||
      sm.layers.size() != parent.layers.size())
    fail(ErrorKind::incompatible_submodel, "submodel structure differs from parent");
  Model out = parent;
  std::size_t kept_in = parent.input_dim;
  std::size_t hidden_idx = 0;
  for (std::size_t k = 0; k < parent.layers.size(); ++k) {
    const auto &pl = parent.layers[k];
    const auto &sl = sm.layers[k];
    const std::size_t kept_out = pl.shape.kind == LayerKind::hidden
                                     ? kept_width(sub.origin_p, pl.shape.out_dim)
                                     : pl.shape.out_dim;
    if (sl.shape.kind != pl.shape.kind || sl.shape.in_dim != kept_in ||
        sl.shape.out_dim != kept_out || sl.weight.rows() != kept_out ||
        sl.weight.cols() != kept_in || sl.bias.size() != kept_out)
      fail(ErrorKind::incompatible_submodel,
           "layer " + std::to_string(k) + " of the submodel does not match rate " +
               std::to_string(sub.origin_p.value()));
    if (pl.shape.kind == LayerKind::hidden) {
      if (hidden_idx >= sub.kept.size() || sub.kept[hidden_idx] != kept_out)
        fail(ErrorKind::incompatible_submodel, "kept-channel record disagrees with shapes");
      ++hidden_idx;
    }
    auto &ol = out.layers[k];
    for (std::size_t o = 0; o < kept_out; ++o) {
      const auto src = sl.weight.row(o);
      std::copy(src.begin(), src.end(), ol.weight.row(o).begin());
      ol.bias[o] = sl.bias[o];
    }
    kept_in = kept_out;
  }
  return out;
}

Matrix forward(const Model &model, const Matrix &batch) {
  check_batch(model, batch);
  for (double v : batch.data())
    if (!std::isfinite(v)) fail(ErrorKind::invalid_input, "non-finite input value");
  return std::move(forward_all(model, batch).back());
}

double loss(const Model &model, const Matrix &batch, std::span<const int> labels) {
  check_batch(model, batch);
  check_labels(model, batch, labels);
  return cross_entropy(forward(model, batch), labels, nullptr);
}

LossGradient loss_and_gradient(const Model &model, const Matrix &batch,
                               std::span<const int> labels) {
  check_batch(model, batch);
  check_labels(model, batch, labels);
  const auto acts = forward_all(model, batch);
  const std::size_t B = batch.rows();
  const double inv_b = 1.0 / static_cast<double>(B);

  LossGradient out;
  Matrix delta(B, model.class_count);
  out.loss = cross_entropy(acts.back(), labels, &delta);
  for (std::size_t b = 0; b < B; ++b) {
    delta(b, static_cast<std::size_t>(labels[b])) -= 1.0;
    for (auto &v : delta.row(b)) v *= inv_b;
  }
  out.gradient = zeros_like(model);

  for (std::size_t k = model.layers.size(); k-- > 0;) {
    const auto &layer = model.layers[k];
    const Matrix &a_prev = acts[k];
    auto &g = out.gradient.layers[k];
    const std::size_t out_dim = layer.shape.out_dim;
    const std::size_t in_dim = layer.shape.in_dim;
    for (std::size_t b = 0; b < B; ++b) {
      const auto d = delta.row(b);
      const auto a = a_prev.row(b);
      for (std::size_t o = 0; o < out_dim; ++o) {
        if (d[o] == 0.0) continue;
        auto gw = g.weight.row(o);
        for (std::size_t i = 0; i < in_dim; ++i) gw[i] += d[o] * a[i];
        g.bias[o] += d[o];
      }
    }
    if (k == 0) break;
    // Propagate through W and the previous layer's rectifier. acts[k] holds
    // relu(z) so relu'(z) = [acts[k] > 0].
    Matrix prev(B, in_dim);
    for (std::size_t b = 0; b < B; ++b) {
      const auto d = delta.row(b);
      const auto a = a_prev.row(b);
      auto pr = prev.row(b);
      for (std::size_t o = 0; o < out_dim; ++o) {
        if (d[o] == 0.0) continue;
        const auto w = layer.weight.row(o);
        for (std::size_t i = 0; i < in_dim; ++i) pr[i] += d[o] * w[i];
      }
      for (std::size_t i = 0; i < in_dim; ++i)
        if (!(a[i] > 0.0)) pr[i] = 0.0;
    }
    delta = std::move(prev);
  }
  return out;
}

StepResult sgd_step(const Model &model, const Matrix &batch, std::span<const int> labels,
                    double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr))
    fail(ErrorKind::invalid_input, "learning rate must be finite and >= 0");
  auto lg = loss_and_gradient(model, batch, labels);
  if (!std::isfinite(lg.loss))
    fail(ErrorKind::numerical_failure, "non-finite training loss");
  StepResult r{model, lg.loss};
  if (lr == 0.0) return r;
  for (std::size_t k = 0; k < r.model.layers.size(); ++k) {
    auto &w = r.model.layers[k].weight.data();
    const auto &gw = lg.gradient.layers[k].weight.data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
    auto &bias = r.model.layers[k].bias;
    const auto &gb = lg.gradient.layers[k].bias;
    for (std::size_t i = 0; i < bias.size(); ++i) bias[i] -= lr * gb[i];
  }
  for (const auto &l : r.model.layers) {
    for (double v : l.weight.data())
      if (!std::isfinite(v)) fail(ErrorKind::numerical_failure, "non-finite weight after step");
  }
  return r;
}

std::size_t argmax(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  return best;
}

double evaluate(const Model &model, const LabeledDataset &data) {
  if (data.empty()) fail(ErrorKind::invalid_input, "cannot evaluate on an empty dataset");
  const Matrix scores = forward(model, data.features);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); ++b)
    if (argmax(scores.row(b)) == static_cast<std::size_t>(data.labels[b])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace fedgreen::widthnet
