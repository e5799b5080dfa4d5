#include "prism/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace prism {

namespace {
constexpr char kMagic[8] = {'P', 'R', 'S', 'M', 'C', 'K', '0', '1'};
}

RewardSet Checkpoint::reward_set(const TabularMdp& mdp,
                                 const SolveOptions& opt) const {
  if (mdp.num_states() != num_states || mdp.num_actions() != num_actions) {
    throw DimensionMismatch("checkpoint does not match MDP dimensions");
  }
  RewardSet set;
  set.rewards = rewards;
  set.refresh(mdp, opt);
  return set;
}

Checkpoint make_checkpoint(const EmState& state, const TabularMdp& mdp) {
  return Checkpoint{mdp.num_states(), mdp.num_actions(), mdp.discount(),
                    state.rewards.rewards, state.net};
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::int32_t S = ckpt.num_states, A = ckpt.num_actions,
                     K = ckpt.num_intentions();
  out.write(reinterpret_cast<const char*>(&S), sizeof(S));
  out.write(reinterpret_cast<const char*>(&A), sizeof(A));
  out.write(reinterpret_cast<const char*>(&K), sizeof(K));
  out.write(reinterpret_cast<const char*>(&ckpt.discount),
            sizeof(ckpt.discount));
  for (const RewardTable& r : ckpt.rewards) {
    if (r.values.rows() != S || r.values.cols() != A) {
      throw DimensionMismatch("reward table shape mismatch in checkpoint");
    }
    out.write(reinterpret_cast<const char*>(r.values.data()),
              static_cast<std::streamsize>(sizeof(double) * r.values.size()));
  }
  write_network(out, ckpt.net);
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw ParseError("not a prism checkpoint: " + path);
  }
  std::int32_t S = 0, A = 0, K = 0;
  double discount = 0.0;
  in.read(reinterpret_cast<char*>(&S), sizeof(S));
  in.read(reinterpret_cast<char*>(&A), sizeof(A));
  in.read(reinterpret_cast<char*>(&K), sizeof(K));
  in.read(reinterpret_cast<char*>(&discount), sizeof(discount));
  if (!in || S <= 0 || A <= 0 || K <= 0) {
    throw ParseError("corrupt checkpoint header: " + path);
  }
  std::vector<RewardTable> rewards(K);
  for (int k = 0; k < K; ++k) {
    rewards[k].values.resize(S, A);
    in.read(reinterpret_cast<char*>(rewards[k].values.data()),
            static_cast<std::streamsize>(sizeof(double) * S * A));
  }
  GatingNetwork net = read_network(in);
  if (!in) throw ParseError("checkpoint truncated: " + path);
  return Checkpoint{S, A, discount, std::move(rewards), std::move(net)};
}

}  // namespace prism
