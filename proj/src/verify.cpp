#include "safesparse/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "safesparse/io.hpp"

namespace safesparse {

BoundCheck check_bound(std::span<const SparseUpdate> updates, std::span<const char> attacker_flag,
                       const PackPartition& partition) {
  if (updates.size() != attacker_flag.size())
    throw std::invalid_argument("check_bound: one flag per update is required");
  GlobalModelState zero{ParamVector::Zero(static_cast<Eigen::Index>(partition.dim())),
                        SparseMask(partition.pack_count(), true), 0};
  std::vector<std::size_t> all, benign;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    all.push_back(i);
    if (!attacker_flag[i]) benign.push_back(i);
  }
  const ParamVector wg = aggregate_packs(updates, all, zero, partition).params;
  const ParamVector wb = aggregate_packs(updates, benign, zero, partition).params;

  BoundCheck out;
  for (std::size_t p = 0; p < partition.pack_count(); ++p) {
    std::size_t n = 0, na = 0;
    for (std::size_t i = 0; i < updates.size(); ++i) {
      if (!updates[i].mask.test(p)) continue;
      ++n;
      if (attacker_flag[i]) ++na;
    }
    if (n == 0) continue;
    if (na == n) {
      ++out.skipped_packs;
      continue;
    }
    const auto r = partition.range(p);
    const auto b = static_cast<Eigen::Index>(r.begin);
    const auto len = static_cast<Eigen::Index>(r.size());
    out.rho += (wg.segment(b, len) - wb.segment(b, len)).squaredNorm();
    const double fp = static_cast<double>(na) / static_cast<double>(n);
    out.sum_fp_sq += fp * fp;
    for (std::size_t i = 0; i < updates.size(); ++i) {
      if (!attacker_flag[i] || !updates[i].mask.test(p)) continue;
      out.eps = std::max(out.eps, (updates[i].pack_values(partition, p) - wb.segment(b, len)).norm());
    }
  }
  out.bound = out.eps * out.eps * out.sum_fp_sq;
  return out;
}

namespace {

bool within_bound(double rho, double bound) {
  return rho <= bound * (1.0 + 1e-12) + 1e-300;
}

BoundInstance random_instance(std::size_t trial, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, trial, 0, 0xB0D));
  std::uniform_int_distribution<std::size_t> pack_dist(1, 16), size_dist(1, 4), client_dist(2, 10);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t packs = pack_dist(rng);
  const std::size_t s = size_dist(rng);
  const std::size_t m = client_dist(rng);
  const std::size_t attackers = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
  const double density = 0.3 + 0.6 * unit(rng);
  const double shift = 4.0 * normal(rng);
  PackPartition partition(packs * s, s);

  std::vector<SparseUpdate> updates;
  std::vector<char> flag(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    flag[i] = i < attackers;
    SparseMask mask(packs);
    for (std::size_t p = 0; p < packs; ++p)
      if (unit(rng) < density) mask.set(p);
    ParamVector model(static_cast<Eigen::Index>(packs * s));
    for (auto& v : model) v = normal(rng) + (flag[i] ? shift : 0.0);
    updates.push_back(restrict_to_mask(model, mask, partition, static_cast<int>(i), 1));
  }
  const BoundCheck c = check_bound(updates, flag, partition);

  BoundInstance inst;
  inst.trial = trial;
  inst.packs = packs;
  inst.clients = m;
  inst.attackers = attackers;
  inst.skipped_packs = c.skipped_packs;
  inst.rho = c.rho;
  inst.eps = c.eps;
  inst.sum_fp_sq = c.sum_fp_sq;
  inst.bound = c.bound;
  inst.violated = !within_bound(c.rho, c.bound);
  return inst;
}

}  // namespace

Theorem1Report verify_theorem1(std::size_t trials, std::uint64_t seed) {
  Theorem1Report rep;
  double tight = 0.0;
  std::size_t tight_n = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    rep.instances.push_back(random_instance(t, seed));
    const auto& inst = rep.instances.back();
    rep.violations += inst.violated;
    rep.skipped_packs += inst.skipped_packs;
    if (inst.bound > 0.0) {
      tight += inst.rho / inst.bound;
      ++tight_n;
    }
  }
  rep.mean_tightness = tight_n ? tight / static_cast<double>(tight_n) : 0.0;

  const double a = 3.25, b = -1.5;
  PackPartition one(1, 1);
  ParamVector wa(1), wb(1);
  wa << a;
  wb << b;
  SparseMask full(1, true);
  std::vector<SparseUpdate> ups{restrict_to_mask(wa, full, one, 0, 1),
                                restrict_to_mask(wb, full, one, 1, 1)};
  std::vector<char> flag{1, 0};
  const BoundCheck c = check_bound(ups, flag, one);
  rep.equality_rho = c.rho;
  rep.equality_bound = c.bound;
  rep.equality_expected = ((a - b) / 2) * ((a - b) / 2);
  rep.equality_ok = std::abs(c.rho - rep.equality_expected) <= 1e-12 &&
                    std::abs(c.bound - rep.equality_expected) <= 1e-12;
  return rep;
}

std::string theorem1_csv(const Theorem1Report& rep) {
  std::ostringstream o;
  o << "trial,packs,clients,attackers,skipped_packs,rho,eps,sum_fp_sq,bound,tightness,violated\n";
  for (const auto& i : rep.instances) {
    o << i.trial << ',' << i.packs << ',' << i.clients << ',' << i.attackers << ','
      << i.skipped_packs << ',' << format_number(i.rho) << ',' << format_number(i.eps) << ','
      << format_number(i.sum_fp_sq) << ',' << format_number(i.bound) << ','
      << (i.bound > 0.0 ? format_number(i.rho / i.bound) : "") << ',' << (i.violated ? 1 : 0)
      << '\n';
  }
  return o.str();
}

CurveFit fit_inverse_time(const std::vector<double>& y, double a) {
  CurveFit f;
  const std::size_t n = y.size();
  if (n == 0) return f;
  const std::size_t start = n / 2;
  const std::size_t count = n - start;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(count), 2);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(count));
  for (std::size_t i = start; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i - start);
    x(r, 0) = 1.0 / (static_cast<double>(i + 1) + a);
    x(r, 1) = 1.0;
    rhs(r) = y[i];
  }
  Eigen::VectorXd coef;
  if (count >= 2) {
    coef = x.colPivHouseholderQr().solve(rhs);
  } else {
    coef = Eigen::Vector2d(0.0, rhs(0));
  }
  f.c = coef(0);
  f.floor = coef(1);
  f.rss = (x * coef - rhs).squaredNorm();
  return f;
}

ExperimentConfig theorem2_config() {
  ExperimentConfig c;
  c.n_clients = 20;
  c.rounds = 200;
  c.task.kind = TaskKind::Quadratic;
  c.task.dim = 64;
  c.task.mu = 1.0;
  c.task.L = 10.0;
  c.pack_size = 8;
  c.topk_ratio = 0.5;
  c.optimizer.kind = OptimizerKind::SGD;
  c.optimizer.schedule = Schedule::InverseTime;
  c.optimizer.schedule_mu = 1.0;
  c.optimizer.schedule_a = 80.0;
  c.attack.kind = AttackKind::IPM;
  c.attack.attacker_ratio = 0.4;
  c.attack.start_round = 10;
  return c;
}

namespace {

ConvergenceCase run_case(const std::string& name, const ExperimentConfig& cfg,
                         std::vector<ParamVector>* params_out = nullptr) {
  ConvergenceCase out;
  out.name = name;
  Simulation sim(cfg);
  GlobalModelState state = sim.initial_state();
  for (int r = 1; r <= cfg.rounds; ++r) {
    RoundRecord rec = sim.run_round(state, r);
    out.dist.push_back(rec.eval.dist_to_opt.value_or(std::nan("")));
    if (params_out) params_out->push_back(state.params);
  }
  out.final_dist = out.dist.empty() ? 0.0 : out.dist.back();
  out.fit = fit_inverse_time(out.dist, cfg.optimizer.schedule_a);
  return out;
}

}  // namespace

Theorem2Report verify_theorem2(const ExperimentConfig& base) {
  if (base.task.kind != TaskKind::Quadratic)
    throw std::invalid_argument("verify_theorem2: the task must be quadratic");
  AttackPlan none = base.attack;
  none.kind = AttackKind::None;
  AttackPlan ipm = base.attack;
  ipm.kind = AttackKind::IPM;

  Theorem2Report rep;
  ExperimentConfig a = base;
  a.attack = none;
  a.aggregator = AggregatorKind::FedAvg;
  a.sparse = false;
  rep.dense = run_case("dense", a);

  ExperimentConfig b = a;
  b.sparse = true;
  rep.sparse = run_case("sparse", b);

  ExperimentConfig c = b;
  c.attack = ipm;
  c.aggregator = AggregatorKind::SafeSparse;
  rep.defended = run_case("defended", c);

  ExperimentConfig d = c;
  d.aggregator = AggregatorKind::FedAvg;
  rep.undefended = run_case("undefended", d);

  ExperimentConfig full_dense = a;
  full_dense.topk_ratio = 1.0;
  ExperimentConfig full_sparse = b;
  full_sparse.topk_ratio = 1.0;
  std::vector<ParamVector> pd, ps;
  run_case("full_dense", full_dense, &pd);
  run_case("full_sparse", full_sparse, &ps);
  rep.full_topk_identical = pd.size() == ps.size();
  for (std::size_t i = 0; rep.full_topk_identical && i < pd.size(); ++i)
    rep.full_topk_identical = pd[i].size() == ps[i].size() &&
                              std::equal(pd[i].begin(), pd[i].end(), ps[i].begin());

  const double floor_b = rep.sparse.fit.floor;
  rep.floor_ordered = floor_b >= rep.dense.fit.floor;
  rep.defended_bounded = std::isfinite(rep.defended.fit.floor) &&
                         rep.defended.final_dist <= 5.0 * floor_b;
  rep.undefended_diverged = !std::isfinite(rep.undefended.final_dist) ||
                            rep.undefended.final_dist >= 10.0 * floor_b;
  return rep;
}

std::string theorem2_csv(const Theorem2Report& rep) {
  std::ostringstream o;
  o << "case,metric,round,value\n";
  for (const ConvergenceCase* c : {&rep.dense, &rep.sparse, &rep.defended, &rep.undefended}) {
    for (std::size_t i = 0; i < c->dist.size(); ++i)
      o << c->name << ",dist_to_opt," << (i + 1) << ',' << format_number(c->dist[i]) << '\n';
    o << c->name << ",fit_c,," << format_number(c->fit.c) << '\n';
    o << c->name << ",fit_floor,," << format_number(c->fit.floor) << '\n';
    o << c->name << ",fit_rss,," << format_number(c->fit.rss) << '\n';
    o << c->name << ",final,," << format_number(c->final_dist) << '\n';
  }
  o << "check,full_topk_identical,," << rep.full_topk_identical << '\n';
  o << "check,floor_ordered,," << rep.floor_ordered << '\n';
  o << "check,defended_bounded,," << rep.defended_bounded << '\n';
  o << "check,undefended_diverged,," << rep.undefended_diverged << '\n';
  return o.str();
}

}  // namespace safesparse
