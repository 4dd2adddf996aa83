#include "stunt/protonet.hpp"

#include "stunt/rng.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

namespace stunt {

namespace {

/// Calls fn(param_block, other_blocks..., is_weight) for the four tensors.
template <class Fn, class... Ps>
void for_each_block(Fn&& fn, EncoderParams& p, Ps&... others) {
  fn(p.w1, others.w1..., true);
  fn(p.b1, others.b1..., false);
  fn(p.w2, others.w2..., true);
  fn(p.b2, others.b2..., false);
}

}  // namespace

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z;
  z.w1 = Matrix::Zero(w1.rows(), w1.cols());
  z.b1 = RowVector::Zero(b1.size());
  z.w2 = Matrix::Zero(w2.rows(), w2.cols());
  z.b2 = RowVector::Zero(b2.size());
  return z;
}

std::size_t EncoderParams::parameter_count() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
}

EncoderParams init_encoder(Index input_dim, Index hidden_dim, Index embed_dim, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || embed_dim < 1) throw ConfigError("encoder dimensions must be positive");
  Rng rng(seed);
  auto fill = [&rng](Matrix& w) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows()));
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  };
  EncoderParams p;
  p.w1.resize(input_dim, hidden_dim);
  p.w2.resize(hidden_dim, embed_dim);
  fill(p.w1);
  fill(p.w2);
  p.b1 = RowVector::Zero(hidden_dim);
  p.b2 = RowVector::Zero(embed_dim);
  return p;
}

Matrix encode(const EncoderParams& params, const Matrix& x) {
  if (x.cols() != params.input_dim()) {
    throw DataError("encoder expects " + std::to_string(params.input_dim()) + " features, got " +
                    std::to_string(x.cols()));
  }
  Matrix h = x * params.w1;
  h.rowwise() += params.b1;
  h = h.cwiseMax(0.0);
  Matrix z = h * params.w2;
  z.rowwise() += params.b2;
  return z;
}

Matrix class_prototypes(const Matrix& support_embed, std::span<const int> labels, int way) {
  if (static_cast<Index>(labels.size()) != support_embed.rows()) throw DataError("prototypes: label count mismatch");
  Matrix protos = Matrix::Zero(way, support_embed.cols());
  std::vector<int> counts(static_cast<std::size_t>(way), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= way) throw DataError("prototypes: label outside [0, way)");
    protos.row(c) += support_embed.row(static_cast<Index>(i));
    ++counts[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < way; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) throw DataError("prototypes: class " + std::to_string(c) + " has no support");
    protos.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }
  return protos;
}

Matrix prototype_distances(const Matrix& query_embed, const Matrix& prototypes) {
  Matrix d(query_embed.rows(), prototypes.rows());
  for (Index i = 0; i < query_embed.rows(); ++i) {
    for (Index c = 0; c < prototypes.rows(); ++c) {
      d(i, c) = std::sqrt((query_embed.row(i) - prototypes.row(c)).squaredNorm() + kDistanceEpsilon);
    }
  }
  return d;
}

Matrix class_probabilities(const Matrix& distances) {
  Matrix p(distances.rows(), distances.cols());
  for (Index i = 0; i < distances.rows(); ++i) {
    const double lo = distances.row(i).minCoeff();
    double sum = 0.0;
    for (Index c = 0; c < distances.cols(); ++c) {
      p(i, c) = std::exp(lo - distances(i, c));
      sum += p(i, c);
    }
    p.row(i) /= sum;
  }
  return p;
}

namespace {

struct Forward {
  Matrix x;   // stacked support then query rows
  Matrix a1;  // pre-activation
  Matrix h;
  Matrix z;
  Matrix protos;
  Matrix dist;
  Matrix prob;
  double loss = 0.0;
  double accuracy = 0.0;
};

Forward forward(const EncoderParams& params, const Episode& ep) {
  const Index ns = ep.support.rows();
  const Index nq = ep.query.rows();
  if (nq == 0 || ns == 0) throw DataError("episode has no support or no query rows");
  Forward f;
  f.x.resize(ns + nq, ep.support.cols());
  f.x.topRows(ns) = ep.support;
  f.x.bottomRows(nq) = ep.query;
  if (f.x.cols() != params.input_dim()) throw DataError("episode width does not match encoder input");
  f.a1 = f.x * params.w1;
  f.a1.rowwise() += params.b1;
  f.h = f.a1.cwiseMax(0.0);
  f.z = f.h * params.w2;
  f.z.rowwise() += params.b2;
  f.protos = class_prototypes(f.z.topRows(ns), ep.support_labels, ep.way());
  f.dist = prototype_distances(f.z.bottomRows(nq), f.protos);
  f.prob = class_probabilities(f.dist);
  int correct = 0;
  for (Index i = 0; i < nq; ++i) {
    const int y = ep.query_labels[static_cast<std::size_t>(i)];
    // log softmax evaluated stably from the distances
    const double lo = f.dist.row(i).minCoeff();
    const double lse = std::log((-(f.dist.row(i).array() - lo)).exp().sum()) - lo;
    f.loss += -(-f.dist(i, y) - lse);
    Index best = 0;
    f.dist.row(i).minCoeff(&best);
    if (best == y) ++correct;
  }
  f.loss /= static_cast<double>(nq);
  f.accuracy = static_cast<double>(correct) / static_cast<double>(nq);
  return f;
}

}  // namespace

double episode_loss(const EncoderParams& params, const Episode& episode) { return forward(params, episode).loss; }

EpisodeOutcome episode_loss_and_grad(const EncoderParams& params, const Episode& episode) {
  const Forward f = forward(params, episode);
  const Index ns = episode.support.rows();
  const Index nq = episode.query.rows();
  const int way = episode.way();

  // g(i, c) = dL / d dist(i, c) = (y - p) / nq
  Matrix g = -f.prob / static_cast<double>(nq);
  for (Index i = 0; i < nq; ++i) g(i, episode.query_labels[static_cast<std::size_t>(i)]) += 1.0 / static_cast<double>(nq);

  Matrix dz = Matrix::Zero(ns + nq, f.z.cols());
  Matrix dprotos = Matrix::Zero(way, f.z.cols());
  for (Index i = 0; i < nq; ++i) {
    for (int c = 0; c < way; ++c) {
      const RowVector diff = (f.z.row(ns + i) - f.protos.row(c)) * (g(i, c) / f.dist(i, c));
      dz.row(ns + i) += diff;
      dprotos.row(c) -= diff;
    }
  }
  std::vector<int> counts(static_cast<std::size_t>(way), 0);
  for (int c : episode.support_labels) ++counts[static_cast<std::size_t>(c)];
  for (Index j = 0; j < ns; ++j) {
    const int c = episode.support_labels[static_cast<std::size_t>(j)];
    dz.row(j) = dprotos.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }

  EpisodeOutcome out;
  out.loss = f.loss;
  out.accuracy = f.accuracy;
  out.grad.w2.noalias() = f.h.transpose() * dz;
  out.grad.b2 = dz.colwise().sum();
  Matrix da = dz * params.w2.transpose();
  da.array() *= (f.a1.array() > 0.0).cast<double>();
  out.grad.w1.noalias() = f.x.transpose() * da;
  out.grad.b1 = da.colwise().sum();
  return out;
}

AdamState AdamState::for_params(const EncoderParams& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(EncoderParams& params, const EncoderParams& grad, AdamState& state, const AdamOptions& options) {
  ++state.step;
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  auto g = grad;
  for_each_block(
      [&](auto& p, auto& gr, auto& m, auto& v, bool is_weight) {
        auto ga = gr.array();
        if (is_weight && options.weight_decay != 0.0) ga += options.weight_decay * p.array();
        m.array() = options.beta1 * m.array() + (1.0 - options.beta1) * ga;
        v.array() = options.beta2 * v.array() + (1.0 - options.beta2) * ga.square();
        p.array() -= options.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + options.eps);
      },
      params, g, state.m, state.v);
}

namespace {

constexpr char kMagic[8] = {'S', 'T', 'U', 'N', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <class T>
void put(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw LoadError("truncated checkpoint " + path.string());
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put(out, kCheckpointVersion);
  put(out, ck.config_hash);
  put(out, static_cast<std::int64_t>(ck.step));
  put(out, ck.pseudo_val_accuracy);
  put(out, static_cast<std::int64_t>(ck.params.input_dim()));
  put(out, static_cast<std::int64_t>(ck.params.hidden_dim()));
  put(out, static_cast<std::int64_t>(ck.params.embed_dim()));
  auto params = ck.params;
  for_each_block(
      [&](auto& block, bool) {
        out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size() * sizeof(double)));
      },
      params);
  if (!out) throw LoadError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw LoadError(path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) throw LoadError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config_hash = get<std::uint64_t>(in, path);
  ck.step = static_cast<long>(get<std::int64_t>(in, path));
  ck.pseudo_val_accuracy = get<double>(in, path);
  const auto d = get<std::int64_t>(in, path);
  const auto h = get<std::int64_t>(in, path);
  const auto e = get<std::int64_t>(in, path);
  if (d < 1 || h < 1 || e < 1 || d > (1 << 24) || h > (1 << 24) || e > (1 << 24)) {
    throw LoadError("corrupt checkpoint dimensions in " + path.string());
  }
  ck.params.w1.resize(d, h);
  ck.params.b1.resize(h);
  ck.params.w2.resize(h, e);
  ck.params.b2.resize(e);
  for_each_block(
      [&](auto& block, bool) {
        if (!in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(block.size() * sizeof(double)))) {
          throw LoadError("truncated checkpoint " + path.string());
        }
      },
      ck.params);
  return ck;
}

}  // namespace stunt
