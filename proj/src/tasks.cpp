#include "safesparse/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "safesparse/attacks.hpp"

namespace safesparse {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(a);
  h = mix(h ^ b);
  h = mix(h ^ c);
  h = mix(h ^ d);
  return h;
}

TaskKind parse_task(std::string_view s) {
  if (s == "quadratic") return TaskKind::Quadratic;
  if (s == "logistic") return TaskKind::Logistic;
  if (s == "tiny_mlp") return TaskKind::TinyMLP;
  throw std::invalid_argument("unknown task kind: " + std::string(s));
}

std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Quadratic: return "quadratic";
    case TaskKind::Logistic: return "logistic";
    case TaskKind::TinyMLP: return "tiny_mlp";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Quadratic

QuadraticTask::QuadraticTask(std::size_t dim, double mu, double L, std::size_t n_clients,
                             double heterogeneity, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("quadratic: dim must be >= 1");
  if (!(mu > 0.0) || mu > L) throw std::invalid_argument("quadratic: need 0 < mu <= L");
  if (n_clients == 0) throw std::invalid_argument("quadratic: need >= 1 client");
  std::mt19937_64 rng(mix_seed(seed, 0x51));
  std::uniform_real_distribution<double> eig(mu, L);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = static_cast<Eigen::Index>(dim);
  h_.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) h_[i] = eig(rng);
  // Spectrum spans exactly [mu, L].
  h_[0] = mu;
  if (d > 1) h_[d - 1] = L;
  w_star_.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) w_star_[i] = normal(rng);
  b_.resize(d, static_cast<Eigen::Index>(n_clients));
  for (Eigen::Index j = 0; j < b_.cols(); ++j)
    for (Eigen::Index i = 0; i < d; ++i) b_(i, j) = heterogeneity * normal(rng);
  const ParamVector mean = b_.rowwise().mean();
  b_.colwise() -= mean;
}

double QuadraticTask::loss(const ParamVector& w) const {
  const ParamVector e = w - w_star_;
  return 0.5 * e.dot(h_.cwiseProduct(e));
}

ParamVector QuadraticTask::gradient(const ParamVector& w) const {
  return h_.cwiseProduct(w - w_star_);
}

double QuadraticTask::client_loss(std::size_t client, const ParamVector& w) const {
  return loss(w) + b_.col(static_cast<Eigen::Index>(client)).dot(w);
}

ParamVector QuadraticTask::client_gradient(std::size_t client, const ParamVector& w) const {
  return gradient(w) + b_.col(static_cast<Eigen::Index>(client));
}

QuadraticTask make_quadratic_task(std::size_t dim, double mu, double L, std::size_t n_clients,
                                  double heterogeneity, std::uint64_t seed) {
  return QuadraticTask(dim, mu, L, n_clients, heterogeneity, seed);
}

// ---------------------------------------------------------------------------
// Classifiers

Classifier::Classifier(TaskKind kind, std::size_t features, std::size_t hidden, int num_classes)
    : kind_(kind), features_(features), hidden_(kind == TaskKind::Logistic ? 0 : hidden),
      classes_(num_classes) {
  if (kind == TaskKind::Quadratic) throw std::invalid_argument("Classifier: not a classification task");
  if (features == 0 || num_classes < 2) throw std::invalid_argument("Classifier: bad shape");
  if (kind == TaskKind::TinyMLP && hidden == 0) throw std::invalid_argument("Classifier: hidden = 0");
}

std::size_t Classifier::dim() const {
  const auto M = static_cast<std::size_t>(classes_);
  if (hidden_ == 0) return M * features_ + M;
  return hidden_ * features_ + hidden_ + M * hidden_ + M;
}

ParamVector Classifier::init_params(std::uint64_t seed) const {
  ParamVector w = ParamVector::Zero(static_cast<Eigen::Index>(dim()));
  if (hidden_ == 0) return w;
  std::mt19937_64 rng(mix_seed(seed, 0x1417));
  std::normal_distribution<double> n1(0.0, 1.0 / std::sqrt(static_cast<double>(features_)));
  std::normal_distribution<double> n2(0.0, 1.0 / std::sqrt(static_cast<double>(hidden_)));
  const auto w1 = static_cast<Eigen::Index>(hidden_ * features_);
  const auto w2_begin = w1 + static_cast<Eigen::Index>(hidden_);
  const auto w2 = static_cast<Eigen::Index>(hidden_) * classes_;
  for (Eigen::Index i = 0; i < w1; ++i) w[i] = n1(rng);
  for (Eigen::Index i = 0; i < w2; ++i) w[w2_begin + i] = n2(rng);
  return w;
}

namespace {

// Layout: [W1 (H x F, column-major) | b1 (H) | W2 (M x H) | b2 (M)], or
// [W (M x F) | b (M)] for logistic regression.
struct Layer {
  Eigen::Map<const Matrix<double>> weight;
  Eigen::Map<const ParamVector> bias;
};

Layer layer_at(const ParamVector& w, Eigen::Index offset, Eigen::Index out, Eigen::Index in) {
  return {Eigen::Map<const Matrix<double>>(w.data() + offset, out, in),
          Eigen::Map<const ParamVector>(w.data() + offset + out * in, out)};
}

void softmax_rows(Matrix<double>& z) {
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double mx = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - mx).exp();
    z.row(r) /= z.row(r).sum();
  }
}

}  // namespace

Matrix<double> Classifier::logits(const ParamVector& w, const Matrix<double>& x) const {
  if (static_cast<std::size_t>(w.size()) != dim()) throw std::invalid_argument("logits: wrong dim");
  const auto F = static_cast<Eigen::Index>(features_);
  const auto M = static_cast<Eigen::Index>(classes_);
  if (hidden_ == 0) {
    auto l = layer_at(w, 0, M, F);
    return (x * l.weight.transpose()).rowwise() + l.bias.transpose();
  }
  const auto H = static_cast<Eigen::Index>(hidden_);
  auto l1 = layer_at(w, 0, H, F);
  auto l2 = layer_at(w, H * F + H, M, H);
  const Matrix<double> a1 = ((x * l1.weight.transpose()).rowwise() + l1.bias.transpose()).array().tanh();
  return (a1 * l2.weight.transpose()).rowwise() + l2.bias.transpose();
}

double Classifier::loss(const ParamVector& w, const Matrix<double>& x, std::span<const int> labels,
                        ParamVector* grad) const {
  const auto B = x.rows();
  if (static_cast<std::size_t>(B) != labels.size()) throw std::invalid_argument("loss: batch size mismatch");
  if (B == 0) {
    if (grad) grad->setZero(static_cast<Eigen::Index>(dim()));
    return 0.0;
  }
  const auto F = static_cast<Eigen::Index>(features_);
  const auto M = static_cast<Eigen::Index>(classes_);
  const auto H = static_cast<Eigen::Index>(hidden_);

  Matrix<double> a1;
  Matrix<double> z;
  if (hidden_ == 0) {
    auto l = layer_at(w, 0, M, F);
    z = (x * l.weight.transpose()).rowwise() + l.bias.transpose();
  } else {
    auto l1 = layer_at(w, 0, H, F);
    auto l2 = layer_at(w, H * F + H, M, H);
    a1 = ((x * l1.weight.transpose()).rowwise() + l1.bias.transpose()).array().tanh();
    z = (a1 * l2.weight.transpose()).rowwise() + l2.bias.transpose();
  }
  double total = 0.0;
  for (Eigen::Index r = 0; r < B; ++r) {
    const double mx = z.row(r).maxCoeff();
    const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
    total += lse - z(r, labels[static_cast<std::size_t>(r)]);
  }
  const double mean_loss = total / static_cast<double>(B);
  if (!grad) return mean_loss;

  Matrix<double> dz = z;
  softmax_rows(dz);
  for (Eigen::Index r = 0; r < B; ++r) dz(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
  dz /= static_cast<double>(B);

  grad->resize(static_cast<Eigen::Index>(dim()));
  if (hidden_ == 0) {
    Eigen::Map<Matrix<double>>(grad->data(), M, F) = dz.transpose() * x;
    grad->segment(M * F, M) = dz.colwise().sum().transpose();
    return mean_loss;
  }
  auto l2 = layer_at(w, H * F + H, M, H);
  const Eigen::Index off2 = H * F + H;
  Eigen::Map<Matrix<double>>(grad->data() + off2, M, H) = dz.transpose() * a1;
  grad->segment(off2 + M * H, M) = dz.colwise().sum().transpose();
  const Matrix<double> dz1 = ((dz * l2.weight).array() * (1.0 - a1.array().square())).matrix();
  Eigen::Map<Matrix<double>>(grad->data(), H, F) = dz1.transpose() * x;
  grad->segment(H * F, H) = dz1.colwise().sum().transpose();
  return mean_loss;
}

// ---------------------------------------------------------------------------
// Data

ClassificationData make_classification_data(const TaskSpec& spec) {
  if (spec.num_classes < 2) throw std::invalid_argument("classification: need >= 2 classes");
  const auto M = spec.num_classes;
  const auto F = static_cast<Eigen::Index>(spec.features);
  std::mt19937_64 rng(mix_seed(spec.seed, 0xB10B));
  std::normal_distribution<double> normal(0.0, 1.0);

  ClassificationData out;
  out.centers.resize(M, F);
  // Closest pair of centres sits exactly `separation` apart.
  for (Eigen::Index i = 0; i < out.centers.size(); ++i) out.centers.data()[i] = normal(rng);
  double closest = std::numeric_limits<double>::infinity();
  for (int a = 0; a < M; ++a)
    for (int b = a + 1; b < M; ++b)
      closest = std::min(closest, (out.centers.row(a) - out.centers.row(b)).norm());
  out.centers *= spec.separation / closest;

  auto draw = [&](std::size_t n) {
    Dataset ds;
    ds.num_classes = M;
    ds.features.resize(static_cast<Eigen::Index>(n), F);
    ds.labels.resize(n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < n; ++k) {
      const auto row = static_cast<Eigen::Index>(order[k]);
      const int y = static_cast<int>(k % static_cast<std::size_t>(M));
      ds.labels[order[k]] = y;
      for (Eigen::Index f = 0; f < F; ++f) ds.features(row, f) = out.centers(y, f) + normal(rng);
    }
    return ds;
  };
  out.train = draw(spec.train_samples);
  out.test = draw(spec.test_samples);
  return out;
}

std::size_t Task::dim() const {
  if (quadratic) return quadratic->dim();
  return classifier->dim();
}

ParamVector Task::initial_params() const {
  if (quadratic) return ParamVector::Zero(static_cast<Eigen::Index>(quadratic->dim()));
  return classifier->init_params(spec.seed);
}

Task make_task(const TaskSpec& spec, std::size_t n_clients) {
  Task t;
  t.spec = spec;
  if (spec.kind == TaskKind::Quadratic) {
    t.quadratic.emplace(spec.dim, spec.mu, spec.L, n_clients, spec.heterogeneity, spec.seed);
  } else {
    t.classifier.emplace(spec.kind, spec.features, spec.hidden, spec.num_classes);
    t.data = make_classification_data(spec);
  }
  return t;
}

PartitionMode parse_partition(std::string_view s) {
  if (s == "iid") return PartitionMode::IID;
  if (s == "dirichlet") return PartitionMode::Dirichlet;
  throw std::invalid_argument("unknown partition mode: " + std::string(s));
}

std::string_view to_string(PartitionMode m) { return m == PartitionMode::IID ? "iid" : "dirichlet"; }

DataPartition partition_data(const Dataset& data, std::size_t n_clients, PartitionMode mode,
                             double alpha, std::uint64_t seed) {
  if (n_clients == 0) throw std::invalid_argument("partition_data: need >= 1 client");
  if (n_clients > data.size()) throw std::invalid_argument("partition_data: more clients than samples");
  DataPartition part;
  part.mode = mode;
  part.alpha = alpha;
  part.clients.assign(n_clients, {});

  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.num_classes));
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

  if (mode == PartitionMode::IID) {
    std::size_t next = 0;
    for (const auto& cls : by_class)
      for (auto idx : cls) part.clients[next++ % n_clients].push_back(idx);
    return part;
  }

  if (!(alpha > 0.0)) throw std::invalid_argument("partition_data: alpha must be > 0");
  std::mt19937_64 rng(mix_seed(seed, 0xD1E));
  std::gamma_distribution<double> gamma(alpha, 1.0);
  constexpr int kRetries = 100;
  for (int attempt = 0; attempt <= kRetries; ++attempt) {
    for (auto& c : part.clients) c.clear();
    for (auto cls : by_class) {
      std::shuffle(cls.begin(), cls.end(), rng);
      std::vector<double> p(n_clients);
      double sum = 0.0;
      for (auto& v : p) sum += (v = gamma(rng));
      if (!(sum > 0.0)) p.assign(n_clients, sum = 1.0);
      double cum = 0.0;
      std::size_t begin = 0;
      for (std::size_t c = 0; c < n_clients; ++c) {
        cum += p[c] / sum;
        const std::size_t end = (c + 1 == n_clients)
                                    ? cls.size()
                                    : std::min(cls.size(), static_cast<std::size_t>(std::llround(
                                                               cum * static_cast<double>(cls.size()))));
        for (std::size_t k = begin; k < std::max(begin, end); ++k) part.clients[c].push_back(cls[k]);
        begin = std::max(begin, end);
      }
    }
    const bool ok = std::none_of(part.clients.begin(), part.clients.end(),
                                 [](const auto& c) { return c.empty(); });
    if (ok) break;
    if (attempt == kRetries) {
      for (auto& c : part.clients) {
        if (!c.empty()) continue;
        auto& donor = *std::max_element(part.clients.begin(), part.clients.end(),
                                        [](const auto& a, const auto& b) { return a.size() < b.size(); });
        c.push_back(donor.back());
        donor.pop_back();
        ++part.fixups;
      }
    }
  }
  for (auto& c : part.clients) std::sort(c.begin(), c.end());
  return part;
}

// ---------------------------------------------------------------------------
// Training

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::SGD;
  throw std::invalid_argument("unknown optimizer: " + std::string(s));
}
std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

Schedule parse_schedule(std::string_view s) {
  if (s == "constant") return Schedule::Constant;
  if (s == "inverse_time") return Schedule::InverseTime;
  throw std::invalid_argument("unknown lr schedule: " + std::string(s));
}
std::string_view to_string(Schedule s) { return s == Schedule::Constant ? "constant" : "inverse_time"; }

double OptimizerConfig::rate(int t) const {
  if (schedule == Schedule::Constant) return lr;
  return 8.0 / (schedule_mu * (static_cast<double>(t) + schedule_a));
}

namespace {

class Stepper {
 public:
  Stepper(const OptimizerConfig& opt, Eigen::Index d, double lr) : opt_(opt), lr_(lr) {
    if (opt.kind == OptimizerKind::Adam) {
      m_.setZero(d);
      v_.setZero(d);
    }
  }
  void step(ParamVector& w, const ParamVector& g) {
    if (opt_.kind == OptimizerKind::SGD) {
      w -= lr_ * g;
      return;
    }
    ++t_;
    m_ = opt_.beta1 * m_ + (1.0 - opt_.beta1) * g;
    v_ = opt_.beta2 * v_ + (1.0 - opt_.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(opt_.beta1, t_);
    const double c2 = 1.0 - std::pow(opt_.beta2, t_);
    w.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + opt_.eps);
  }

 private:
  const OptimizerConfig& opt_;
  double lr_;
  ParamVector m_, v_;
  int t_ = 0;
};

}  // namespace

LocalTrainResult local_train(const Task& task, const ParamVector& start, const ClientData& data,
                             int epochs, const OptimizerConfig& opt, int t, std::uint64_t seed) {
  LocalTrainResult res{start, false};
  if (epochs <= 0) return res;
  std::mt19937_64 rng(seed);
  Stepper stepper(opt, start.size(), opt.rate(t));

  if (task.quadratic) {
    std::normal_distribution<double> noise(0.0, 1.0);
    const double sigma = task.spec.grad_noise;
    for (int e = 0; e < epochs; ++e)
      for (std::size_t s = 0; s < task.spec.steps_per_epoch; ++s) {
        ParamVector g = task.quadratic->client_gradient(data.client, res.params);
        if (sigma > 0.0)
          for (Eigen::Index i = 0; i < g.size(); ++i) g[i] += sigma * noise(rng);
        stepper.step(res.params, g);
      }
    return res;
  }

  if (data.samples.empty()) {
    res.empty_data = true;
    return res;
  }
  const Dataset& train = task.data->train;
  const auto F = train.features.cols();
  std::vector<std::size_t> order(data.samples.begin(), data.samples.end());
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
  Matrix<double> xb;
  std::vector<int> yb;
  ParamVector grad;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t n = std::min(bs, order.size() - b);
      xb.resize(static_cast<Eigen::Index>(n), F);
      yb.resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        const auto idx = order[b + k];
        xb.row(static_cast<Eigen::Index>(k)) = train.features.row(static_cast<Eigen::Index>(idx));
        yb[k] = data.flip_labels ? label_flip(train.labels[idx], train.num_classes) : train.labels[idx];
      }
      task.classifier->loss(res.params, xb, yb, &grad);
      stepper.step(res.params, grad);
    }
  }
  return res;
}

Evaluation evaluate(const ParamVector& model, const Task& task) {
  Evaluation ev;
  if (task.quadratic) {
    ev.loss = task.quadratic->loss(model);
    ev.dist_to_opt = (model - task.quadratic->optimum()).squaredNorm();
    return ev;
  }
  const Dataset& test = task.data->test;
  ev.loss = task.classifier->loss(model, test.features, test.labels);
  const Matrix<double> z = task.classifier->logits(model, test.features);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    Eigen::Index arg;
    z.row(r).maxCoeff(&arg);
    if (arg == test.labels[static_cast<std::size_t>(r)]) ++correct;
  }
  ev.accuracy = test.size() ? static_cast<double>(correct) / static_cast<double>(test.size()) : 0.0;
  return ev;
}

}  // namespace safesparse
