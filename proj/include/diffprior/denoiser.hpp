#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "diffprior/random.hpp"

namespace diffprior {

/// Named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
};

/// Noise-prediction model ε_θ(x_t, c, level).
///
/// Batches are column-major: column b of `x_t` and `condition` is one sample,
/// `levels[b]` its noise-level index (1-based; fractional values interpolate
/// between neighbouring level embeddings).
///
/// `predict` is const and safe to call concurrently. `forward` additionally
/// caches activations for one subsequent `backward`, which accumulates
/// parameter gradients.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual Eigen::Index dimension() const = 0;
  virtual Eigen::Index condition_dimension() const = 0;

  virtual Eigen::MatrixXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                  const Eigen::Ref<const Eigen::MatrixXd>& condition,
                                  const Eigen::Ref<const Eigen::VectorXd>& levels) const = 0;

  virtual Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                  const Eigen::Ref<const Eigen::MatrixXd>& condition,
                                  const Eigen::Ref<const Eigen::VectorXd>& levels) = 0;

  /// `upstream` is dL/d(output) for the cached forward pass. Throws
  /// contract-violation without a matching forward or after the parameters
  /// changed.
  virtual void backward(const Eigen::Ref<const Eigen::MatrixXd>& upstream) = 0;

  virtual std::vector<Parameter*> parameters() = 0;
  std::vector<const Parameter*> parameters() const;

  virtual std::unique_ptr<Denoiser> clone() const = 0;

  void zero_grad();

  /// Bumped whenever parameter values change through the optimizer.
  std::uint64_t version() const { return version_; }
  void mark_updated() { ++version_; }

  /// Single-sample convenience overload.
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::VectorXd>& x_t, const Eigen::Ref<const Eigen::VectorXd>& condition,
                          double level) const;

 private:
  std::uint64_t version_ = 0;
};

/// ε_θ(x) = θ ⊙ x: a diagonal linear map in the eigenbasis of a diagonal Σ.
class LinearDenoiser final : public Denoiser {
 public:
  explicit LinearDenoiser(Eigen::VectorXd theta);

  using Denoiser::parameters;
  using Denoiser::predict;

  Eigen::Index dimension() const override { return theta_.value.rows(); }
  Eigen::Index condition_dimension() const override { return 0; }

  Eigen::MatrixXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x_t, const Eigen::Ref<const Eigen::MatrixXd>& condition,
                          const Eigen::Ref<const Eigen::VectorXd>& levels) const override;
  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x_t, const Eigen::Ref<const Eigen::MatrixXd>& condition,
                          const Eigen::Ref<const Eigen::VectorXd>& levels) override;
  void backward(const Eigen::Ref<const Eigen::MatrixXd>& upstream) override;
  std::vector<Parameter*> parameters() override { return {&theta_}; }
  std::unique_ptr<Denoiser> clone() const override { return std::make_unique<LinearDenoiser>(*this); }

  Eigen::VectorXd theta() const { return theta_.value.col(0); }

 private:
  Parameter theta_;
  std::optional<Eigen::MatrixXd> cached_input_;
  std::uint64_t cached_version_ = 0;
};

struct MlpShape {
  Eigen::Index dimension = 0;
  Eigen::Index condition_dimension = 0;
  Eigen::Index embedding_dimension = 64;
  Eigen::Index hidden = 128;
};

/// Sinusoidal embedding of a (possibly fractional) noise-level index; the
/// fractional case linearly interpolates the two neighbouring integer
/// embeddings.
Eigen::VectorXd level_embedding(double level, Eigen::Index dimension);

/// [x_t; condition; embedding] → tanh → tanh → tanh → linear.
class MlpDenoiser final : public Denoiser {
 public:
  /// Glorot-uniform weights, zero biases.
  MlpDenoiser(const MlpShape& shape, Rng& rng);
  /// All-zero parameters; used when loading checkpoints.
  explicit MlpDenoiser(const MlpShape& shape);

  using Denoiser::parameters;
  using Denoiser::predict;

  Eigen::Index dimension() const override { return shape_.dimension; }
  Eigen::Index condition_dimension() const override { return shape_.condition_dimension; }
  const MlpShape& shape() const { return shape_; }

  Eigen::MatrixXd predict(const Eigen::Ref<const Eigen::MatrixXd>& x_t, const Eigen::Ref<const Eigen::MatrixXd>& condition,
                          const Eigen::Ref<const Eigen::VectorXd>& levels) const override;
  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x_t, const Eigen::Ref<const Eigen::MatrixXd>& condition,
                          const Eigen::Ref<const Eigen::VectorXd>& levels) override;
  void backward(const Eigen::Ref<const Eigen::MatrixXd>& upstream) override;
  std::vector<Parameter*> parameters() override;
  std::unique_ptr<Denoiser> clone() const override { return std::make_unique<MlpDenoiser>(*this); }

 private:
  struct Activations {
    Eigen::MatrixXd input;
    Eigen::MatrixXd h1, h2, h3;
  };

  Eigen::MatrixXd assemble_input(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                 const Eigen::Ref<const Eigen::MatrixXd>& condition,
                                 const Eigen::Ref<const Eigen::VectorXd>& levels) const;
  Eigen::MatrixXd run(Activations& acts) const;

  MlpShape shape_;
  Parameter w_in_, b_in_, w_h1_, b_h1_, w_h2_, b_h2_, w_out_, b_out_;
  std::optional<Activations> cache_;
  std::uint64_t cached_version_ = 0;
};

/// Adam moments for every parameter of one model, in `parameters()` order.
struct AdamState {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Eigen::MatrixXd> first_moment;
  std::vector<Eigen::MatrixXd> second_moment;

  static AdamState for_model(Denoiser& model, double learning_rate);
};

/// Bias-corrected Adam update using the gradients accumulated in `model`.
/// Throws numerical-divergence on a non-finite gradient.
void adam_step(Denoiser& model, AdamState& state);

/// One tensor of a "PGC1" checkpoint. Payload is row-major float32.
struct Tensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

std::vector<std::uint8_t> encode_pgc1(std::span<const Tensor> tensors);
std::vector<Tensor> decode_pgc1(std::span<const std::uint8_t> bytes);

Tensor matrix_tensor(const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& m);
Eigen::MatrixXd tensor_matrix(const Tensor& t);
const Tensor* find_tensor(std::span<const Tensor> tensors, const std::string& name);

/// Model parameters plus shape metadata, and optionally the optimizer state
/// under the "adam." prefix.
std::vector<Tensor> checkpoint_tensors(const Denoiser& model, const AdamState* adam = nullptr);
std::unique_ptr<Denoiser> load_denoiser(std::span<const Tensor> tensors);
/// Restores optimizer moments saved alongside `model`; empty optional if absent.
std::optional<AdamState> load_adam_state(std::span<const Tensor> tensors, const Denoiser& model);

void write_checkpoint(const std::filesystem::path& path, std::span<const Tensor> tensors);
std::vector<Tensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace diffprior
