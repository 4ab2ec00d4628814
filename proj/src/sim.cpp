#include "safesparse/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace safesparse {

std::size_t model_dim(const TaskSpec& spec) {
  if (spec.kind == TaskKind::Quadratic) return spec.dim;
  return Classifier(spec.kind, spec.features, spec.hidden, spec.num_classes).dim();
}

void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("config: " + what); };
  if (cfg.n_clients < 2) fail("n_clients must be >= 2");
  if (cfg.rounds < 0) fail("rounds must be >= 0");
  if (!(cfg.attack.attacker_ratio >= 0.0 && cfg.attack.attacker_ratio < 0.5))
    fail("attack.attacker_ratio must be in [0, 0.5): the threat model requires an honest majority");
  if (cfg.attack.start_round < 1) fail("attack.start_round must be >= 1");
  if (!(cfg.topk_ratio > 0.0 && cfg.topk_ratio <= 1.0)) fail("sparsify.topk_ratio must be in (0, 1]");
  if (cfg.pack_size == 0) fail("sparsify.pack_size must be >= 1");
  const std::size_t d = model_dim(cfg.task);
  if (cfg.pack_size > d) fail("sparsify.pack_size must not exceed the model dimension");
  if (cfg.agg.beta < 0.0) fail("aggregator.beta must be >= 0");
  if (!(cfg.agg.gamma > 0.0 && cfg.agg.gamma < 1.0)) fail("aggregator.gamma must be in (0, 1)");
  if (cfg.agg.trim_pct < 0.0 || cfg.agg.trim_pct >= 50.0) fail("aggregator.trim_pct must be in [0, 50)");
  if (cfg.task.kind == TaskKind::Quadratic && !(cfg.task.mu > 0.0 && cfg.task.mu <= cfg.task.L))
    fail("task: need 0 < mu <= L");
  if (cfg.task.kind != TaskKind::Quadratic && cfg.n_clients > cfg.task.train_samples)
    fail("task.train_samples must be >= n_clients");
  if (cfg.local_epochs < 0) fail("local.epochs must be >= 0");
  if (!cfg.sparse && cfg.aggregator == AggregatorKind::SafeSparse && cfg.topk_ratio != 1.0)
    fail("dense uplink requires topk_ratio = 1");
}

Simulation::Simulation(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  task_ = make_task(cfg_.task, cfg_.n_clients);
  partition_ = partition_packs(task_.dim(), cfg_.pack_size);
  if (task_.data)
    data_ = partition_data(task_.data->train, cfg_.n_clients, cfg_.partition, cfg_.alpha,
                           mix_seed(cfg_.seed, 0xDA7A));
  if (cfg_.attack.kind != AttackKind::None)
    attackers_ = attacker_ids(cfg_.n_clients, cfg_.attack.attacker_ratio);
  attacker_flag_.assign(cfg_.n_clients, 0);
  for (int a : attackers_) attacker_flag_[static_cast<std::size_t>(a)] = 1;
}

bool Simulation::is_attacker(std::size_t client) const { return attacker_flag_.at(client) != 0; }

std::size_t Simulation::dataset_size(std::size_t client) const {
  if (task_.quadratic) return task_.spec.client_samples;
  return std::max<std::size_t>(1, data_.clients[client].size());
}

GlobalModelState Simulation::initial_state() const {
  GlobalModelState s;
  s.params = task_.initial_params();
  s.coverage = SparseMask(partition_.pack_count(), true);
  s.round = 0;
  return s;
}


std::vector<SparseUpdate> Simulation::client_phase(const GlobalModelState& state, int round) const {
  const std::size_t m = cfg_.n_clients;
  const bool active = cfg_.attack.active(round) && !attackers_.empty();
  const AttackKind kind = cfg_.attack.kind;
  const ParamVector& global = state.params;

  // Honest (or label-flipped) local training; each client owns its RNG stream.
  std::vector<ParamVector> models(m);
  for (std::size_t i = 0; i < m; ++i) {
    ClientData cd;
    cd.client = i;
    if (task_.data) cd.samples = data_.clients[i];
    cd.flip_labels = active && kind == AttackKind::LFA && is_attacker(i);
    models[i] = local_train(task_, global, cd, cfg_.local_epochs, cfg_.optimizer, round - 1,
                            mix_seed(cfg_.seed, static_cast<std::uint64_t>(round), i, 0x7A1))
                    .params;
  }

  if (active) {
    const bool collude = cfg_.attack.collude;
    std::vector<ParamVector> honest_attackers;
    for (int a : attackers_) honest_attackers.push_back(models[static_cast<std::size_t>(a)]);
    const ParamVector& leader = honest_attackers.front();
    const auto attack_seed = [&](std::uint64_t who) {
      return mix_seed(cfg_.seed, static_cast<std::uint64_t>(round), who, 0xA77AC);
    };
    switch (kind) {
      case AttackKind::LFA:
        if (collude)
          for (int a : attackers_) models[static_cast<std::size_t>(a)] = leader;
        break;
      case AttackKind::GNA:
        if (collude) {
          const ParamVector noise = gaussian_noise_update(
              leader, attack_seed(static_cast<std::uint64_t>(attackers_.front())));
          for (int a : attackers_) models[static_cast<std::size_t>(a)] = noise;
        } else {
          for (int a : attackers_)
            models[static_cast<std::size_t>(a)] = gaussian_noise_update(
                models[static_cast<std::size_t>(a)], attack_seed(static_cast<std::uint64_t>(a)));
        }
        break;
      case AttackKind::IPM: {
        const ParamVector crafted = ipm_update(honest_attackers, cfg_.attack.ipm_epsilon, global);
        for (int a : attackers_) models[static_cast<std::size_t>(a)] = crafted;
        break;
      }
      case AttackKind::Scaling: {
        for (int a : attackers_) {
          auto& w = models[static_cast<std::size_t>(a)];
          w = scaling_update(collude ? leader : w, global, cfg_.attack.scale_factor);
        }
        break;
      }
      case AttackKind::None:
        break;
    }
  }

  std::vector<SparseUpdate> updates;
  updates.reserve(m);
  const SparseMask full(partition_.pack_count(), true);
  for (std::size_t i = 0; i < m; ++i) {
    if (cfg_.sparse)
      updates.push_back(sparsify_update(models[i], global, partition_, cfg_.topk_ratio,
                                        static_cast<int>(i), dataset_size(i)));
    else
      updates.push_back(restrict_to_mask(models[i], full, partition_, static_cast<int>(i),
                                         dataset_size(i)));
  }

  if (active && cfg_.attack.mask_mode == MaskMode::Coordinated && cfg_.sparse) {
    std::vector<SparseUpdate> att;
    std::vector<ParamVector> att_models;
    for (int a : attackers_) {
      att.push_back(updates[static_cast<std::size_t>(a)]);
      att_models.push_back(models[static_cast<std::size_t>(a)]);
    }
    auto coordinated = coordinate_masks(att, att_models, partition_, MaskMode::Coordinated);
    for (std::size_t k = 0; k < attackers_.size(); ++k)
      updates[static_cast<std::size_t>(attackers_[k])] = std::move(coordinated[k]);
  }
  return updates;
}

double attack_effectiveness(const ParamVector& poisoned_global, const ParamVector& benign_ideal) {
  if (poisoned_global.size() != benign_ideal.size())
    throw std::invalid_argument("attack_effectiveness: length mismatch");
  return (poisoned_global - benign_ideal).squaredNorm();
}

std::vector<double> fp_ratios(std::span<const SparseUpdate> updates,
                              std::span<const std::size_t> retained,
                              std::span<const char> attacker_flag, const PackPartition& partition) {
  std::vector<double> fp(partition.pack_count(), 0.0);
  for (std::size_t p = 0; p < fp.size(); ++p) {
    std::size_t n = 0, na = 0;
    for (auto j : retained) {
      if (!updates[j].mask.test(p)) continue;
      ++n;
      if (attacker_flag[j]) ++na;
    }
    fp[p] = n ? static_cast<double>(na) / static_cast<double>(n) : 0.0;
  }
  return fp;
}

namespace {

std::vector<int> to_ids(std::span<const SparseUpdate> updates, std::span<const std::size_t> pos) {
  std::vector<int> ids;
  ids.reserve(pos.size());
  for (auto p : pos) ids.push_back(updates[p].client_id);
  return ids;
}

// Dense uplink: models go straight to the aggregator without masks.
RoundAggregation aggregate_dense(AggregatorKind kind, std::span<const SparseUpdate> updates,
                                 std::span<const std::size_t> subset, const GlobalModelState& prev,
                                 const PackPartition& partition, const AggregatorParams& params) {
  if (kind != AggregatorKind::FedAvg) {
    if (subset.size() == updates.size()) return aggregate_round(kind, updates, prev, partition, params);
    RoundAggregation out;
    out.state = aggregate_subset(kind, updates, subset, prev, partition, params);
    out.retained.assign(subset.begin(), subset.end());
    return out;
  }
  RoundAggregation out;
  Matrix<double> x(static_cast<Eigen::Index>(partition.dim()), static_cast<Eigen::Index>(subset.size()));
  std::vector<double> w;
  for (std::size_t k = 0; k < subset.size(); ++k) {
    x.col(static_cast<Eigen::Index>(k)) = updates[subset[k]].values;
    w.push_back(static_cast<double>(updates[subset[k]].dataset_size));
  }
  out.state.params = fedavg(x, w);
  out.retained.assign(subset.begin(), subset.end());
  out.state.coverage = SparseMask(partition.pack_count(), true);
  out.state.round = prev.round + 1;
  return out;
}

}  // namespace

RoundRecord Simulation::run_round(GlobalModelState& state, int round,
                                  std::vector<SparseUpdate>* submissions) const {
  RoundRecord rec;
  rec.round = round;
  rec.attack_active = cfg_.attack.active(round) && !attackers_.empty();

  std::vector<SparseUpdate> updates = client_phase(state, round);
  std::vector<std::size_t> everyone(updates.size());
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});

  RoundAggregation agg =
      cfg_.sparse ? aggregate_round(cfg_.aggregator, updates, state, partition_, cfg_.agg)
                  : aggregate_dense(cfg_.aggregator, updates, everyone, state, partition_, cfg_.agg);

  // Shadow model over the ground-truth benign clients, same aggregator.
  std::vector<std::size_t> benign;
  for (std::size_t i = 0; i < updates.size(); ++i)
    if (!attacker_flag_[i]) benign.push_back(i);
  if (!benign.empty()) {
    const GlobalModelState shadow =
        cfg_.sparse ? aggregate_subset(cfg_.aggregator, updates, benign, state, partition_, cfg_.agg)
                    : aggregate_dense(cfg_.aggregator, updates, benign, state, partition_, cfg_.agg).state;
    rec.rho = attack_effectiveness(agg.state.params, shadow.params);
  }

  rec.retained = to_ids(updates, agg.retained);
  if (agg.filter) {
    rec.excluded_jaccard = to_ids(updates, agg.filter->excluded_jaccard);
    rec.excluded_cluster = to_ids(updates, agg.filter->excluded_cluster);
  }
  rec.degenerate = agg.degenerate;
  rec.trim_fell_back = agg.trim_fell_back;
  rec.rfa_converged = agg.rfa_converged;

  rec.fp.assign(partition_.pack_count(), 0.0);
  if (rec.attack_active) {
    rec.fp = fp_ratios(updates, agg.retained, attacker_flag_, partition_);
    rec.fp_peak = *std::max_element(rec.fp.begin(), rec.fp.end());

    std::vector<char> retained_flag(updates.size(), 0);
    for (auto r : agg.retained) retained_flag[r] = 1;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < updates.size(); ++i) {
      const bool excluded = !retained_flag[i];
      if (excluded && attacker_flag_[i]) ++tp;
      if (excluded && !attacker_flag_[i]) ++fp;
      if (!excluded && attacker_flag_[i]) ++fn;
    }
    if (tp + fp > 0) rec.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) rec.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);

    const auto raw = fp_ratios(updates, everyone, attacker_flag_, partition_);
    SparseMask att_packs(partition_.pack_count());
    for (int a : attackers_) att_packs |= updates[static_cast<std::size_t>(a)].mask;
    double s = 0.0;
    std::size_t c = 0;
    for (std::size_t p = 0; p < raw.size(); ++p)
      if (att_packs.test(p)) {
        s += raw[p];
        ++c;
      }
    if (c) rec.fp_attacker_packs = s / static_cast<double>(c);
  }

  for (const auto& u : updates)
    rec.bytes_uplink += cfg_.sparse ? payload_bytes(u) : 8 * partition_.dim();

  state = std::move(agg.state);
  state.round = round;
  rec.eval = evaluate(state.params, task_);
  if (submissions) *submissions = std::move(updates);
  return rec;
}

Summary summarize(const std::vector<RoundRecord>& records, const Evaluation& initial) {
  Summary s;
  s.rounds = static_cast<int>(records.size());
  s.final_eval = records.empty() ? initial : records.back().eval;
  double sp = 0.0, sr = 0.0, sf = 0.0, rho = 0.0;
  std::size_t np = 0, nr = 0, nf = 0;
  for (const auto& r : records) {
    if (r.precision) sp += *r.precision, ++np;
    if (r.recall) sr += *r.recall, ++nr;
    if (r.fp_attacker_packs) sf += *r.fp_attacker_packs, ++nf;
    s.peak_fp = std::max(s.peak_fp, r.fp_peak);
    s.total_bytes += r.bytes_uplink;
    s.degenerate_rounds += r.degenerate ? 1 : 0;
    rho += r.rho;
  }
  if (np) s.mean_precision = sp / static_cast<double>(np);
  if (nr) s.mean_recall = sr / static_cast<double>(nr);
  if (nf) s.mean_fp_attacker_packs = sf / static_cast<double>(nf);
  if (!records.empty()) s.mean_rho = rho / static_cast<double>(records.size());
  return s;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RoundObserver& observer) {
  Simulation sim(cfg);
  ExperimentResult res;
  GlobalModelState state = sim.initial_state();
  const Evaluation initial = evaluate(state.params, sim.task());
  std::vector<SparseUpdate> subs;
  for (int r = 1; r <= cfg.rounds; ++r) {
    const GlobalModelState prev = observer ? state : GlobalModelState{};
    res.records.push_back(sim.run_round(state, r, observer ? &subs : nullptr));
    if (observer) observer(r, prev, subs, res.records.back());
  }
  res.summary = summarize(res.records, initial);
  res.final_state = std::move(state);
  return res;
}

SimilaritySnapshot similarity_at_round(const ExperimentConfig& cfg, int round) {
  if (round < 1 || round > cfg.rounds)
    throw std::invalid_argument("similarity_at_round: round must be in [1, rounds]");
  Simulation sim(cfg);
  GlobalModelState state = sim.initial_state();
  for (int r = 1; r < round; ++r) sim.run_round(state, r);
  const std::vector<SparseUpdate> subs = sim.client_phase(state, round);
  std::vector<SparseMask> masks;
  std::vector<SignVector> signs;
  for (const auto& u : subs) {
    masks.push_back(u.mask);
    signs.push_back(sign_delta(u, state.params, state.coverage, sim.partition()));
  }
  return {round, jaccard_matrix(masks), sign_cosine_matrix(signs, sim.partition())};
}

}  // namespace safesparse
