#include "prism/gating.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>

namespace prism {

namespace {

constexpr double kLogFloor = 1e-12;

inline double safe_log(double x) { return std::log(x < kLogFloor ? kLogFloor : x); }

inline int gate_multiple(CellType cell) { return cell == CellType::Rnn ? 1 : 4; }

// Fixed parameter traversal order used by optimizers and checkpoints.
template <typename Net, typename Fn>
void for_each_tensor(Net& net, Fn&& fn) {
  fn(net.state_embed);
  fn(net.action_embed);
  fn(net.w_input);
  fn(net.w_recur);
  fn(net.b_recur);
  fn(net.w_out);
  fn(net.b_out);
}

template <typename Grads, typename Fn>
void for_each_grad(Grads& g, Fn&& fn) {
  fn(g.state_embed);
  fn(g.action_embed);
  fn(g.w_input);
  fn(g.w_recur);
  fn(g.b_recur);
  fn(g.w_out);
  fn(g.b_out);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

CellType cell_type_from_string(const std::string& name) {
  if (name == "rnn") return CellType::Rnn;
  if (name == "lstm") return CellType::Lstm;
  throw InvalidConfig("unknown architecture '" + name + "' (rnn|lstm)");
}

std::string to_string(CellType cell) {
  return cell == CellType::Rnn ? "rnn" : "lstm";
}

ObservationSequence make_observations(const Trajectory& traj, int lag) {
  if (lag != 0 && lag != 1) throw InvalidConfig("observation lag must be 0 or 1");
  ObservationSequence seq;
  seq.states = traj.states;
  const int n = traj.length();
  seq.actions.resize(n);
  for (int i = 0; i < n; ++i) {
    const int src = i - lag;
    seq.actions[i] = src >= 0 ? traj.actions[src] : -1;
  }
  return seq;
}

GatingNetwork::GatingNetwork(CellType cell_, int num_states_, int num_actions_,
                             int embed_dim_, int hidden_dim_,
                             int num_intentions_)
    : cell(cell_),
      num_states(num_states_),
      num_actions(num_actions_),
      embed_dim(embed_dim_),
      hidden_dim(hidden_dim_),
      num_intentions(num_intentions_) {
  if (num_states <= 0 || num_actions <= 0 || embed_dim <= 0 ||
      hidden_dim <= 0 || num_intentions <= 0) {
    throw InvalidConfig("gating network dimensions must be positive");
  }
  const int g = gate_multiple(cell);
  state_embed = Matrix::Zero(num_states, embed_dim);
  action_embed = Matrix::Zero(num_actions, embed_dim);
  w_input = Matrix::Zero(g * hidden_dim, embed_dim);
  w_recur = Matrix::Zero(g * hidden_dim, hidden_dim);
  b_recur = Vector::Zero(g * hidden_dim);
  w_out = Matrix::Zero(num_intentions, hidden_dim);
  b_out = Vector::Zero(num_intentions);
}

void GatingNetwork::init_params(std::uint64_t seed_) {
  seed = seed_;
  Rng rng(seed_);
  const double embed_range = 0.1;
  const double weight_range = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  auto fill = [&](Matrix& m, double range) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        m(i, j) = rng.uniform(-range, range);
  };
  fill(state_embed, embed_range);
  fill(action_embed, embed_range);
  fill(w_input, weight_range);
  fill(w_recur, weight_range);
  b_recur.setZero();
  fill(w_out, weight_range);
  b_out.setZero();
}

long GatingNetwork::param_count() const {
  long n = 0;
  for_each_tensor(*this, [&](const auto& t) { n += t.size(); });
  return n;
}

long GatingNetwork::rnn_param_count(int num_states, int num_actions,
                                    int embed_dim, int hidden_dim,
                                    int num_intentions) {
  const long d = embed_dim, dp = hidden_dim, k = num_intentions;
  return (static_cast<long>(num_states) + num_actions) * d + dp * d + dp * dp +
         dp + k * dp + k;
}

GateGradients::GateGradients(const GatingNetwork& net)
    : state_embed(Matrix::Zero(net.state_embed.rows(), net.state_embed.cols())),
      action_embed(
          Matrix::Zero(net.action_embed.rows(), net.action_embed.cols())),
      w_input(Matrix::Zero(net.w_input.rows(), net.w_input.cols())),
      w_recur(Matrix::Zero(net.w_recur.rows(), net.w_recur.cols())),
      w_out(Matrix::Zero(net.w_out.rows(), net.w_out.cols())),
      b_recur(Vector::Zero(net.b_recur.size())),
      b_out(Vector::Zero(net.b_out.size())) {}

void GateGradients::set_zero() {
  for_each_grad(*this, [](auto& t) { t.setZero(); });
}

void GateGradients::add_scaled(const GateGradients& other, double scale) {
  state_embed += scale * other.state_embed;
  action_embed += scale * other.action_embed;
  w_input += scale * other.w_input;
  w_recur += scale * other.w_recur;
  b_recur += scale * other.b_recur;
  w_out += scale * other.w_out;
  b_out += scale * other.b_out;
}

namespace {

// Everything the backward pass needs from the forward pass.
struct ForwardCache {
  Matrix xs;       // n x d embedded inputs
  Matrix hiddens;  // n x d'
  Matrix dists;    // n x K
  // LSTM only:
  Matrix gates;    // n x 4d', post-activation (i, f, g, o)
  Matrix cells;    // n x d'
  Matrix tanh_c;   // n x d'
};

ForwardCache run_forward(const GatingNetwork& net,
                         const ObservationSequence& seq) {
  const int n = seq.length();
  if (n < 1) throw InvalidConfig("observation sequence must be nonempty");
  if (static_cast<int>(seq.actions.size()) != n) {
    throw DimensionMismatch("observation state/action lengths differ");
  }
  const int d = net.embed_dim;
  const int dp = net.hidden_dim;
  const int K = net.num_intentions;

  ForwardCache cache;
  cache.xs.resize(n, d);
  cache.hiddens.resize(n, dp);
  cache.dists.resize(n, K);
  if (net.cell == CellType::Lstm) {
    cache.gates.resize(n, 4 * dp);
    cache.cells.resize(n, dp);
    cache.tanh_c.resize(n, dp);
  }

  Vector h = Vector::Zero(dp);
  Vector c = Vector::Zero(dp);
  for (int t = 0; t < n; ++t) {
    const int s = seq.states[t];
    const int a = seq.actions[t];
    if (s < 0 || s >= net.num_states) {
      throw BoundsError("state id " + std::to_string(s) + " out of range");
    }
    if (a >= net.num_actions) {
      throw BoundsError("action id " + std::to_string(a) + " out of range");
    }
    Vector x = net.state_embed.row(s).transpose();
    if (a >= 0) x += net.action_embed.row(a).transpose();
    cache.xs.row(t) = x.transpose();

    if (net.cell == CellType::Rnn) {
      h = (net.w_input * x + net.w_recur * h + net.b_recur).array().tanh();
    } else {
      Vector z = net.w_input * x + net.w_recur * h + net.b_recur;
      for (int j = 0; j < dp; ++j) {
        const double gi = sigmoid(z(j));
        const double gf = sigmoid(z(dp + j));
        const double gg = std::tanh(z(2 * dp + j));
        const double go = sigmoid(z(3 * dp + j));
        cache.gates(t, j) = gi;
        cache.gates(t, dp + j) = gf;
        cache.gates(t, 2 * dp + j) = gg;
        cache.gates(t, 3 * dp + j) = go;
        c(j) = gf * c(j) + gi * gg;
        const double tc = std::tanh(c(j));
        cache.cells(t, j) = c(j);
        cache.tanh_c(t, j) = tc;
        h(j) = go * tc;
      }
    }
    cache.hiddens.row(t) = h.transpose();

    Eigen::RowVectorXd logits = (net.w_out * h + net.b_out).transpose();
    const double m = logits.maxCoeff();
    Eigen::RowVectorXd e = (logits.array() - m).exp();
    const double denom = e.sum();
    cache.dists.row(t) = e / denom;
    for (int k = 0; k < K; ++k) {
      if (!std::isfinite(cache.dists(t, k))) {
        throw NumericalFault("gate output is not finite", t);
      }
    }
  }
  return cache;
}

}  // namespace

GateOutput gate_forward(const GatingNetwork& net,
                        const ObservationSequence& seq) {
  ForwardCache cache = run_forward(net, seq);
  return GateOutput{std::move(cache.dists), std::move(cache.hiddens)};
}

GateLoss gate_loss(const GatingNetwork& net, const ObservationSequence& seq,
                   const ResponsibilityMatrix& w, double lambda_l1,
                   double lambda_kl) {
  const int n = seq.length();
  const int K = net.num_intentions;
  if (w.rows() != n || w.cols() != K) {
    throw DimensionMismatch("responsibility matrix shape mismatch in loss");
  }
  if (lambda_l1 < 0.0 || lambda_kl < 0.0) {
    throw InvalidConfig("smoothness weights must be nonnegative");
  }

  const ForwardCache cache = run_forward(net, seq);
  const Matrix& p = cache.dists;
  const int dp = net.hidden_dim;

  GateLoss out{0.0, 0.0, 0.0, 0.0, GateGradients(net)};

  // dL/dp, assembled term by term.
  Matrix dp_grad = Matrix::Zero(n, K);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      out.nll -= w(i, k) * safe_log(p(i, k));
      dp_grad(i, k) -= w(i, k) / std::max(p(i, k), kLogFloor);
    }
  }
  for (int i = 1; i < n; ++i) {
    for (int k = 0; k < K; ++k) {
      const double diff = p(i, k) - p(i - 1, k);
      out.l1 += w(i, k) * std::abs(diff);
      const double sg = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      dp_grad(i, k) += lambda_l1 * w(i, k) * sg;
      dp_grad(i - 1, k) -= lambda_l1 * w(i, k) * sg;

      const double q = p(i - 1, k);  // KL(f(i-1) || f(i))
      const double log_ratio = safe_log(q) - safe_log(p(i, k));
      out.kl += q * log_ratio;
      dp_grad(i, k) -= lambda_kl * q / std::max(p(i, k), kLogFloor);
      dp_grad(i - 1, k) += lambda_kl * (log_ratio + 1.0);
    }
  }
  out.value = out.nll + lambda_l1 * out.l1 + lambda_kl * out.kl;
  if (!std::isfinite(out.value)) {
    throw NumericalFault("loss is not finite", n - 1);
  }

  // Softmax backward, then output head.
  Matrix dh = Matrix::Zero(n, dp);
  for (int i = 0; i < n; ++i) {
    const double dot = dp_grad.row(i).dot(p.row(i));
    Eigen::RowVectorXd du =
        p.row(i).cwiseProduct(dp_grad.row(i) - dot * Eigen::RowVectorXd::Ones(K));
    out.grads.w_out += du.transpose() * cache.hiddens.row(i);
    out.grads.b_out += du.transpose();
    dh.row(i) = du * net.w_out;
  }

  // Backprop through time.
  if (net.cell == CellType::Rnn) {
    Vector carry = Vector::Zero(dp);
    for (int t = n - 1; t >= 0; --t) {
      Vector dht = dh.row(t).transpose() + carry;
      Vector dz =
          dht.cwiseProduct(Vector::Ones(dp) -
                           cache.hiddens.row(t).transpose().cwiseAbs2());
      out.grads.w_input += dz * cache.xs.row(t);
      if (t > 0) out.grads.w_recur += dz * cache.hiddens.row(t - 1);
      out.grads.b_recur += dz;
      carry = net.w_recur.transpose() * dz;

      const Vector dx = net.w_input.transpose() * dz;
      out.grads.state_embed.row(seq.states[t]) += dx.transpose();
      if (seq.actions[t] >= 0) {
        out.grads.action_embed.row(seq.actions[t]) += dx.transpose();
      }
    }
  } else {
    Vector carry_h = Vector::Zero(dp);
    Vector carry_c = Vector::Zero(dp);
    Vector dz(4 * dp);
    for (int t = n - 1; t >= 0; --t) {
      const Vector dht = dh.row(t).transpose() + carry_h;
      for (int j = 0; j < dp; ++j) {
        const double gi = cache.gates(t, j);
        const double gf = cache.gates(t, dp + j);
        const double gg = cache.gates(t, 2 * dp + j);
        const double go = cache.gates(t, 3 * dp + j);
        const double tc = cache.tanh_c(t, j);
        const double c_prev = t > 0 ? cache.cells(t - 1, j) : 0.0;

        const double dc = dht(j) * go * (1.0 - tc * tc) + carry_c(j);
        const double d_go = dht(j) * tc;
        dz(j) = (dc * gg) * gi * (1.0 - gi);              // input gate
        dz(dp + j) = (dc * c_prev) * gf * (1.0 - gf);     // forget gate
        dz(2 * dp + j) = (dc * gi) * (1.0 - gg * gg);     // candidate
        dz(3 * dp + j) = d_go * go * (1.0 - go);          // output gate
        carry_c(j) = dc * gf;
      }
      out.grads.w_input += dz * cache.xs.row(t);
      if (t > 0) out.grads.w_recur += dz * cache.hiddens.row(t - 1);
      out.grads.b_recur += dz;
      carry_h = net.w_recur.transpose() * dz;

      const Vector dx = net.w_input.transpose() * dz;
      out.grads.state_embed.row(seq.states[t]) += dx.transpose();
      if (seq.actions[t] >= 0) {
        out.grads.action_embed.row(seq.actions[t]) += dx.transpose();
      }
    }
  }
  return out;
}

GateTrainer::GateTrainer(TrainOptions opt) : opt_(std::move(opt)) {
  if (opt_.learning_rate < 0.0) throw InvalidConfig("negative learning rate");
  if (opt_.optimizer != "sgd" && opt_.optimizer != "adam") {
    throw InvalidConfig("unknown optimizer '" + opt_.optimizer + "'");
  }
}

double GateTrainer::train_step(GatingNetwork& net,
                               const std::vector<ObservationSequence>& seqs,
                               const std::vector<ResponsibilityMatrix>& resps,
                               Rng& shuffle_rng) {
  if (seqs.empty()) throw InvalidConfig("training batch is empty");
  if (seqs.size() != resps.size()) {
    throw DimensionMismatch("sequence and responsibility counts differ");
  }
  const int N = static_cast<int>(seqs.size());
  const int batch =
      opt_.batch_size <= 0 ? N : std::min(opt_.batch_size, N);

  if (opt_.optimizer == "adam" && !adam_m_) {
    adam_m_ = std::make_unique<GateGradients>(net);
    adam_v_ = std::make_unique<GateGradients>(net);
  }

  std::vector<int> order(N);
  for (int i = 0; i < N; ++i) order[i] = i;

  GateGradients batch_grad(net);
  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < opt_.epochs; ++epoch) {
    // Fisher-Yates with the caller's stream keeps runs reproducible.
    for (int i = N - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.below(i + 1));
      std::swap(order[i], order[j]);
    }
    epoch_loss = 0.0;
    for (int start = 0; start < N; start += batch) {
      const int count = std::min(batch, N - start);
      batch_grad.set_zero();
      double batch_loss = 0.0;
      for (int b = 0; b < count; ++b) {
        const int idx = order[start + b];
        GateLoss l = gate_loss(net, seqs[idx], resps[idx], opt_.lambda_l1,
                               opt_.lambda_kl);
        batch_loss += l.value;
        batch_grad.add_scaled(l.grads, 1.0 / count);
      }
      epoch_loss += batch_loss;
      apply_update(net, batch_grad);
    }
    epoch_loss /= N;
  }
  return epoch_loss;
}

void GateTrainer::apply_update(GatingNetwork& net, const GateGradients& g) {
  const double lr = opt_.learning_rate;
  if (opt_.optimizer == "sgd") {
    net.state_embed -= lr * g.state_embed;
    net.action_embed -= lr * g.action_embed;
    net.w_input -= lr * g.w_input;
    net.w_recur -= lr * g.w_recur;
    net.b_recur -= lr * g.b_recur;
    net.w_out -= lr * g.w_out;
    net.b_out -= lr * g.b_out;
    return;
  }
  ++adam_steps_;
  const double b1 = opt_.adam_beta1, b2 = opt_.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_steps_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_steps_));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
    param.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt_.adam_eps);
  };
  update(net.state_embed, g.state_embed, adam_m_->state_embed,
         adam_v_->state_embed);
  update(net.action_embed, g.action_embed, adam_m_->action_embed,
         adam_v_->action_embed);
  update(net.w_input, g.w_input, adam_m_->w_input, adam_v_->w_input);
  update(net.w_recur, g.w_recur, adam_m_->w_recur, adam_v_->w_recur);
  update(net.b_recur, g.b_recur, adam_m_->b_recur, adam_v_->b_recur);
  update(net.w_out, g.w_out, adam_m_->w_out, adam_v_->w_out);
  update(net.b_out, g.b_out, adam_m_->b_out, adam_v_->b_out);
}

double train_step(GatingNetwork& net,
                  const std::vector<ObservationSequence>& seqs,
                  const std::vector<ResponsibilityMatrix>& resps,
                  const TrainOptions& opt, std::uint64_t shuffle_seed) {
  GateTrainer trainer(opt);
  Rng rng(shuffle_seed);
  return trainer.train_step(net, seqs, resps, rng);
}

namespace {

constexpr char kGateMagic[8] = {'P', 'R', 'S', 'M', 'G', 'T', '0', '1'};

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

void write_tensor(std::ostream& out, const Matrix& m) {
  write_raw<std::int64_t>(out, m.rows());
  write_raw<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

void write_tensor(std::ostream& out, const Vector& v) {
  write_raw<std::int64_t>(out, v.size());
  write_raw<std::int64_t>(out, 1);
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
}

void read_tensor(std::istream& in, Matrix& m) {
  std::int64_t rows = 0, cols = 0;
  read_raw(in, rows);
  read_raw(in, cols);
  if (rows != m.rows() || cols != m.cols()) {
    throw ParseError("checkpoint tensor shape mismatch");
  }
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
}

void read_tensor(std::istream& in, Vector& v) {
  std::int64_t rows = 0, cols = 0;
  read_raw(in, rows);
  read_raw(in, cols);
  if (rows != v.size() || cols != 1) {
    throw ParseError("checkpoint tensor shape mismatch");
  }
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double) * v.size()));
}

}  // namespace

void write_network(std::ostream& out, const GatingNetwork& net) {
  out.write(kGateMagic, sizeof(kGateMagic));
  write_raw<std::uint8_t>(out, net.cell == CellType::Rnn ? 0 : 1);
  write_raw<std::int32_t>(out, net.num_states);
  write_raw<std::int32_t>(out, net.num_actions);
  write_raw<std::int32_t>(out, net.embed_dim);
  write_raw<std::int32_t>(out, net.hidden_dim);
  write_raw<std::int32_t>(out, net.num_intentions);
  write_raw<std::uint64_t>(out, net.seed);
  for_each_tensor(net, [&](const auto& t) { write_tensor(out, t); });
}

GatingNetwork read_network(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kGateMagic, sizeof(magic)) != 0) {
    throw ParseError("not a gate checkpoint");
  }
  std::uint8_t cell_tag = 0;
  std::int32_t S = 0, A = 0, d = 0, dp = 0, K = 0;
  std::uint64_t seed = 0;
  read_raw(in, cell_tag);
  read_raw(in, S);
  read_raw(in, A);
  read_raw(in, d);
  read_raw(in, dp);
  read_raw(in, K);
  read_raw(in, seed);
  if (cell_tag > 1) throw ParseError("unknown cell type in checkpoint");
  GatingNetwork net(cell_tag == 0 ? CellType::Rnn : CellType::Lstm, S, A, d,
                    dp, K);
  net.seed = seed;
  for_each_tensor(net, [&](auto& t) { read_tensor(in, t); });
  if (!in) throw ParseError("gate checkpoint truncated");
  return net;
}

void save_network(const GatingNetwork& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  write_network(out, net);
  if (!out) throw IoError("checkpoint write failed: " + path);
}

GatingNetwork load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  return read_network(in);
}

}  // namespace prism
