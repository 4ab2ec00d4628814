#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "safesparse/params.hpp"

namespace safesparse {

enum class TaskKind { Quadratic, Logistic, TinyMLP };
TaskKind parse_task(std::string_view s);
std::string_view to_string(TaskKind k);

struct TaskSpec {
  TaskKind kind = TaskKind::TinyMLP;
  // Quadratic probe.
  std::size_t dim = 64;
  double mu = 1.0;
  double L = 10.0;
  double heterogeneity = 1.0;  // std of the per-client linear terms
  double grad_noise = 0.0;     // std of additive stochastic-gradient noise
  std::size_t steps_per_epoch = 1;
  std::size_t client_samples = 100;  // nominal |D_i| for the quadratic
  // Classification.
  int num_classes = 10;
  std::size_t features = 20;
  std::size_t hidden = 32;
  std::size_t train_samples = 2000;
  std::size_t test_samples = 400;
  double separation = 4.0;  // closest centre pair distance, in units of the blob std
  std::uint64_t seed = 7;

  bool operator==(const TaskSpec&) const = default;
};

struct Dataset {
  Matrix<double> features;  // one sample per row
  std::vector<int> labels;
  int num_classes = 0;
  std::size_t size() const { return labels.size(); }
};

// f_i(w) = 1/2 (w - W*)^T H (w - W*) + b_i^T w with diagonal H and sum_i b_i = 0.
class QuadraticTask {
 public:
  QuadraticTask(std::size_t dim, double mu, double L, std::size_t n_clients, double heterogeneity,
                std::uint64_t seed);

  std::size_t dim() const { return static_cast<std::size_t>(w_star_.size()); }
  const ParamVector& optimum() const { return w_star_; }
  const ParamVector& hessian_diagonal() const { return h_; }
  const Matrix<double>& linear_terms() const { return b_; }  // d x n_clients

  double loss(const ParamVector& w) const;
  ParamVector gradient(const ParamVector& w) const;
  double client_loss(std::size_t client, const ParamVector& w) const;
  ParamVector client_gradient(std::size_t client, const ParamVector& w) const;

 private:
  ParamVector h_;
  ParamVector w_star_;
  Matrix<double> b_;
};

QuadraticTask make_quadratic_task(std::size_t dim, double mu, double L, std::size_t n_clients,
                                  double heterogeneity, std::uint64_t seed);

// Multinomial logistic regression (hidden = 0) or input -> hidden(tanh) -> M.
class Classifier {
 public:
  Classifier(TaskKind kind, std::size_t features, std::size_t hidden, int num_classes);

  std::size_t dim() const;
  TaskKind kind() const { return kind_; }
  int num_classes() const { return classes_; }

  ParamVector init_params(std::uint64_t seed) const;
  Matrix<double> logits(const ParamVector& w, const Matrix<double>& x) const;
  // Mean cross-entropy over the batch; writes the gradient when asked.
  double loss(const ParamVector& w, const Matrix<double>& x, std::span<const int> labels,
              ParamVector* grad = nullptr) const;

 private:
  TaskKind kind_;
  std::size_t features_;
  std::size_t hidden_;
  int classes_;
};

struct ClassificationData {
  Dataset train;
  Dataset test;
  Matrix<double> centers;  // num_classes x features
};

ClassificationData make_classification_data(const TaskSpec& spec);

// A constructed task: exactly one of `quadratic` / `classifier` is set.
struct Task {
  TaskSpec spec;
  std::optional<QuadraticTask> quadratic;
  std::optional<Classifier> classifier;
  std::optional<ClassificationData> data;

  std::size_t dim() const;
  ParamVector initial_params() const;
};

Task make_task(const TaskSpec& spec, std::size_t n_clients);

enum class PartitionMode { IID, Dirichlet };
PartitionMode parse_partition(std::string_view s);
std::string_view to_string(PartitionMode m);

struct DataPartition {
  PartitionMode mode = PartitionMode::IID;
  double alpha = 1.0;
  std::vector<std::vector<std::size_t>> clients;
  std::size_t fixups = 0;  // samples moved to rescue empty clients
};

DataPartition partition_data(const Dataset& data, std::size_t n_clients, PartitionMode mode,
                             double alpha, std::uint64_t seed);

enum class OptimizerKind { Adam, SGD };
enum class Schedule { Constant, InverseTime };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 64;
  // InverseTime: lr_t = 8 / (mu * (t + a)) with t the zero-based round.
  Schedule schedule = Schedule::Constant;
  double schedule_mu = 1.0;
  double schedule_a = 1.0;

  double rate(int t) const;
  bool operator==(const OptimizerConfig&) const = default;
};

OptimizerKind parse_optimizer(std::string_view s);
std::string_view to_string(OptimizerKind k);
Schedule parse_schedule(std::string_view s);
std::string_view to_string(Schedule s);

struct ClientData {
  std::size_t client = 0;
  std::span<const std::size_t> samples;  // classification only
  bool flip_labels = false;
};

struct LocalTrainResult {
  ParamVector params;
  bool empty_data = false;
};

LocalTrainResult local_train(const Task& task, const ParamVector& start, const ClientData& data,
                             int epochs, const OptimizerConfig& opt, int t, std::uint64_t seed);

struct Evaluation {
  double loss = 0.0;
  std::optional<double> accuracy;
  std::optional<double> dist_to_opt;
};

Evaluation evaluate(const ParamVector& model, const Task& task);

// splitmix64 finaliser; used to derive independent seeds from tuples.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0,
                       std::uint64_t d = 0);

}  // namespace safesparse
