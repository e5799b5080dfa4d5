#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "prism/dataset.hpp"
#include "prism/iavi.hpp"
#include "prism/mdp.hpp"
#include "prism/rng.hpp"

namespace prism {

enum class CellType { Rnn, Lstm };

CellType cell_type_from_string(const std::string& name);
std::string to_string(CellType cell);

/// Tokenized observation stream fed to the gate. An action id of -1 means
/// "no action available at this step" (used by the lagged-observation mode
/// at the first step); only the state embedding contributes then.
struct ObservationSequence {
  std::vector<int> states;
  std::vector<int> actions;

  int length() const { return static_cast<int>(states.size()); }
};

/// Observation at step i is (s_i, a_i); with lag = 1 it is (s_i, a_{i-1}),
/// for callers worried about conditioning the gate on the current action.
ObservationSequence make_observations(const Trajectory& traj, int lag = 0);

/// Recurrent intention gate: embeds (state, action) pairs, runs a single
/// recurrent layer, and projects each hidden state to a distribution over
/// K intentions. Parameters are plain public matrices; construction
/// zero-initializes, init_params draws the standard random init.
struct GatingNetwork {
  GatingNetwork(CellType cell, int num_states, int num_actions, int embed_dim,
                int hidden_dim, int num_intentions);

  CellType cell;
  int num_states;
  int num_actions;
  int embed_dim;      // d
  int hidden_dim;     // d'
  int num_intentions; // K
  std::uint64_t seed = 0;

  Matrix state_embed;   // |S| x d
  Matrix action_embed;  // |A| x d
  Matrix w_input;       // (g d') x d, g = 1 for RNN, 4 for LSTM (i,f,g,o)
  Matrix w_recur;       // (g d') x d'
  Vector b_recur;       // g d'
  Matrix w_out;         // K x d'
  Vector b_out;         // K

  /// Uniform [-1/sqrt(d'), 1/sqrt(d')] for recurrent and output weights,
  /// [-0.1, 0.1] for embeddings, zero biases. Records the seed.
  void init_params(std::uint64_t seed);

  long param_count() const;

  /// Closed-form count for the vanilla RNN configuration:
  /// (|S|+|A|) d + d' d + d'^2 + d' + K d' + K.
  static long rnn_param_count(int num_states, int num_actions, int embed_dim,
                              int hidden_dim, int num_intentions);
};

/// Same shapes as the parameters; accumulated by backprop.
struct GateGradients {
  Matrix state_embed, action_embed, w_input, w_recur, w_out;
  Vector b_recur, b_out;

  explicit GateGradients(const GatingNetwork& net);
  void set_zero();
  void add_scaled(const GateGradients& other, double scale);
};

struct GateOutput {
  Matrix dists;    // n x K, rows on the simplex
  Matrix hiddens;  // n x d'
};

GateOutput gate_forward(const GatingNetwork& net,
                        const ObservationSequence& seq);

struct GateLoss {
  double value = 0.0;
  double nll = 0.0;
  double l1 = 0.0;
  double kl = 0.0;
  GateGradients grads;
};

/// Weighted NLL plus temporal smoothness penalties for one sequence:
///   -sum_i sum_k w_ik log f_k(i)
///   + lambda_l1 * sum_{i>=2} sum_k w_ik |f_k(i) - f_k(i-1)|
///   + lambda_kl * sum_{i>=2} KL(f(i-1) || f(i))
/// with gradients by backpropagation through time. The responsibilities w
/// are constants here; no gradient flows through them. The |.| term takes
/// subgradient 0 at ties.
GateLoss gate_loss(const GatingNetwork& net, const ObservationSequence& seq,
                   const ResponsibilityMatrix& w, double lambda_l1,
                   double lambda_kl);

struct TrainOptions {
  double learning_rate = 1e-3;
  double lambda_l1 = 0.0;
  double lambda_kl = 0.0;
  int epochs = 1;
  int batch_size = 32;  // 0 = full batch
  std::string optimizer = "sgd";  // "sgd" | "adam"
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

/// Minibatch gradient-descent trainer. Owns optimizer state (Adam moments)
/// so it persists across calls when reused between M-steps.
class GateTrainer {
public:
  explicit GateTrainer(TrainOptions opt);

  /// Runs opt.epochs passes over the batch and updates the network in
  /// place. Returns the mean per-sequence loss observed during the final
  /// epoch (computed at the parameter values each minibatch saw).
  double train_step(GatingNetwork& net,
                    const std::vector<ObservationSequence>& seqs,
                    const std::vector<ResponsibilityMatrix>& resps,
                    Rng& shuffle_rng);

  const TrainOptions& options() const { return opt_; }

private:
  void apply_update(GatingNetwork& net, const GateGradients& g);

  TrainOptions opt_;
  std::unique_ptr<GateGradients> adam_m_, adam_v_;
  long adam_steps_ = 0;
};

/// Convenience wrapper for a one-off training call with fresh state.
double train_step(GatingNetwork& net,
                  const std::vector<ObservationSequence>& seqs,
                  const std::vector<ResponsibilityMatrix>& resps,
                  const TrainOptions& opt, std::uint64_t shuffle_seed = 0);

/// Binary checkpoint with shape headers and the stored RNG seed.
/// Round-trips bit-exactly.
void save_network(const GatingNetwork& net, const std::string& path);
GatingNetwork load_network(const std::string& path);

/// Stream variants, used when the gate is embedded in a larger checkpoint.
void write_network(std::ostream& out, const GatingNetwork& net);
GatingNetwork read_network(std::istream& in);

}  // namespace prism
