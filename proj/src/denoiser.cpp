#include "diffprior/denoiser.hpp"

#include <cmath>

#include "diffprior/binary_io.hpp"
#include "diffprior/errors.hpp"

namespace diffprior {

std::vector<const Parameter*> Denoiser::parameters() const {
  auto mutable_params = const_cast<Denoiser*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

void Denoiser::zero_grad() {
  for (Parameter* p : parameters()) p->grad.setZero();
}

Eigen::VectorXd Denoiser::predict(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                                  const Eigen::Ref<const Eigen::VectorXd>& condition, double level) const {
  const Eigen::VectorXd levels = Eigen::VectorXd::Constant(1, level);
  return predict(Eigen::MatrixXd(x_t), Eigen::MatrixXd(condition), levels).col(0);
}

namespace {

void check_batch(const Denoiser& model, const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                 const Eigen::Ref<const Eigen::MatrixXd>& condition, const Eigen::Ref<const Eigen::VectorXd>& levels) {
  require(x_t.rows() == model.dimension(), ErrorKind::Shape,
          "denoiser expects dimension " + std::to_string(model.dimension()) + ", got " + std::to_string(x_t.rows()));
  require(levels.size() == x_t.cols(), ErrorKind::Shape, "one noise level per batch column");
  if (model.condition_dimension() > 0) {
    require(condition.rows() == model.condition_dimension() && condition.cols() == x_t.cols(), ErrorKind::Shape,
            "condition shape does not match the denoiser");
  }
}

Parameter make_parameter(std::string name, Eigen::Index rows, Eigen::Index cols) {
  return Parameter{std::move(name), Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols)};
}

void glorot(Parameter& p, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-limit, limit);
}

}  // namespace

// ---------------------------------------------------------------------------

LinearDenoiser::LinearDenoiser(Eigen::VectorXd theta) : theta_{"linear.theta", theta, Eigen::MatrixXd::Zero(theta.size(), 1)} {
  require(theta.size() >= 1, ErrorKind::InvalidArgument, "linear denoiser needs dimension >= 1");
}

Eigen::MatrixXd LinearDenoiser::predict(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                        const Eigen::Ref<const Eigen::MatrixXd>& condition,
                                        const Eigen::Ref<const Eigen::VectorXd>& levels) const {
  check_batch(*this, x_t, condition, levels);
  return (x_t.array().colwise() * theta_.value.col(0).array()).matrix();
}

Eigen::MatrixXd LinearDenoiser::forward(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                        const Eigen::Ref<const Eigen::MatrixXd>& condition,
                                        const Eigen::Ref<const Eigen::VectorXd>& levels) {
  Eigen::MatrixXd out = predict(x_t, condition, levels);
  cached_input_ = x_t;
  cached_version_ = version();
  return out;
}

void LinearDenoiser::backward(const Eigen::Ref<const Eigen::MatrixXd>& upstream) {
  require(cached_input_.has_value(), ErrorKind::ContractViolation, "backward without a preceding forward");
  require(cached_version_ == version(), ErrorKind::ContractViolation, "backward after parameters changed");
  require(upstream.rows() == cached_input_->rows() && upstream.cols() == cached_input_->cols(), ErrorKind::Shape,
          "upstream gradient shape does not match the forward batch");
  theta_.grad.col(0) += upstream.cwiseProduct(*cached_input_).rowwise().sum();
  cached_input_.reset();
}

// ---------------------------------------------------------------------------

Eigen::VectorXd level_embedding(double level, Eigen::Index dimension) {
  require(dimension >= 2 && dimension % 2 == 0, ErrorKind::InvalidArgument, "embedding dimension must be even");
  const Eigen::Index half = dimension / 2;
  auto exact = [&](double index) {
    Eigen::VectorXd e(dimension);
    for (Eigen::Index k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      e[k] = std::sin(index * freq);
      e[half + k] = std::cos(index * freq);
    }
    return e;
  };
  const double lower = std::floor(level);
  const double frac = level - lower;
  if (frac == 0.0) return exact(lower);
  return (1.0 - frac) * exact(lower) + frac * exact(lower + 1.0);
}

MlpDenoiser::MlpDenoiser(const MlpShape& shape) : shape_(shape) {
  require(shape.dimension >= 1 && shape.hidden >= 1 && shape.condition_dimension >= 0, ErrorKind::InvalidArgument,
          "invalid MLP shape");
  const Eigen::Index in = shape.dimension + shape.condition_dimension + shape.embedding_dimension;
  w_in_ = make_parameter("mlp.in.weight", shape.hidden, in);
  b_in_ = make_parameter("mlp.in.bias", shape.hidden, 1);
  w_h1_ = make_parameter("mlp.hidden1.weight", shape.hidden, shape.hidden);
  b_h1_ = make_parameter("mlp.hidden1.bias", shape.hidden, 1);
  w_h2_ = make_parameter("mlp.hidden2.weight", shape.hidden, shape.hidden);
  b_h2_ = make_parameter("mlp.hidden2.bias", shape.hidden, 1);
  w_out_ = make_parameter("mlp.out.weight", shape.dimension, shape.hidden);
  b_out_ = make_parameter("mlp.out.bias", shape.dimension, 1);
}

MlpDenoiser::MlpDenoiser(const MlpShape& shape, Rng& rng) : MlpDenoiser(shape) {
  glorot(w_in_, rng);
  glorot(w_h1_, rng);
  glorot(w_h2_, rng);
  glorot(w_out_, rng);
}

std::vector<Parameter*> MlpDenoiser::parameters() {
  return {&w_in_, &b_in_, &w_h1_, &b_h1_, &w_h2_, &b_h2_, &w_out_, &b_out_};
}

Eigen::MatrixXd MlpDenoiser::assemble_input(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                            const Eigen::Ref<const Eigen::MatrixXd>& condition,
                                            const Eigen::Ref<const Eigen::VectorXd>& levels) const {
  check_batch(*this, x_t, condition, levels);
  const Eigen::Index d = shape_.dimension;
  const Eigen::Index dc = shape_.condition_dimension;
  const Eigen::Index de = shape_.embedding_dimension;
  Eigen::MatrixXd input(d + dc + de, x_t.cols());
  input.topRows(d) = x_t;
  if (dc > 0) input.middleRows(d, dc) = condition;
  for (Eigen::Index b = 0; b < x_t.cols(); ++b) input.col(b).tail(de) = level_embedding(levels[b], de);
  return input;
}

Eigen::MatrixXd MlpDenoiser::run(Activations& a) const {
  a.h1 = ((w_in_.value * a.input).colwise() + b_in_.value.col(0)).array().tanh().matrix();
  a.h2 = ((w_h1_.value * a.h1).colwise() + b_h1_.value.col(0)).array().tanh().matrix();
  a.h3 = ((w_h2_.value * a.h2).colwise() + b_h2_.value.col(0)).array().tanh().matrix();
  return (w_out_.value * a.h3).colwise() + b_out_.value.col(0);
}

Eigen::MatrixXd MlpDenoiser::predict(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                     const Eigen::Ref<const Eigen::MatrixXd>& condition,
                                     const Eigen::Ref<const Eigen::VectorXd>& levels) const {
  Activations a;
  a.input = assemble_input(x_t, condition, levels);
  return run(a);
}

Eigen::MatrixXd MlpDenoiser::forward(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                     const Eigen::Ref<const Eigen::MatrixXd>& condition,
                                     const Eigen::Ref<const Eigen::VectorXd>& levels) {
  Activations a;
  a.input = assemble_input(x_t, condition, levels);
  Eigen::MatrixXd out = run(a);
  cache_ = std::move(a);
  cached_version_ = version();
  return out;
}

void MlpDenoiser::backward(const Eigen::Ref<const Eigen::MatrixXd>& upstream) {
  require(cache_.has_value(), ErrorKind::ContractViolation, "backward without a preceding forward");
  require(cached_version_ == version(), ErrorKind::ContractViolation, "backward after parameters changed");
  const Activations& a = *cache_;
  require(upstream.rows() == shape_.dimension && upstream.cols() == a.input.cols(), ErrorKind::Shape,
          "upstream gradient shape does not match the forward batch");

  w_out_.grad.noalias() += upstream * a.h3.transpose();
  b_out_.grad.col(0) += upstream.rowwise().sum();
  Eigen::MatrixXd delta = (w_out_.value.transpose() * upstream).cwiseProduct((1.0 - a.h3.array().square()).matrix());

  w_h2_.grad.noalias() += delta * a.h2.transpose();
  b_h2_.grad.col(0) += delta.rowwise().sum();
  delta = (w_h2_.value.transpose() * delta).cwiseProduct((1.0 - a.h2.array().square()).matrix());

  w_h1_.grad.noalias() += delta * a.h1.transpose();
  b_h1_.grad.col(0) += delta.rowwise().sum();
  delta = (w_h1_.value.transpose() * delta).cwiseProduct((1.0 - a.h1.array().square()).matrix());

  w_in_.grad.noalias() += delta * a.input.transpose();
  b_in_.grad.col(0) += delta.rowwise().sum();
  cache_.reset();
}

// ---------------------------------------------------------------------------

AdamState AdamState::for_model(Denoiser& model, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const Parameter* p : model.parameters()) {
    s.first_moment.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    s.second_moment.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }
  return s;
}

void adam_step(Denoiser& model, AdamState& state) {
  auto params = model.parameters();
  require(params.size() == state.first_moment.size() && params.size() == state.second_moment.size(), ErrorKind::Shape,
          "optimizer state does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(state.first_moment[i].rows() == params[i]->value.rows() &&
                state.first_moment[i].cols() == params[i]->value.cols(),
            ErrorKind::Shape, "optimizer moment shape mismatch for " + params[i]->name);
    if (!params[i]->grad.allFinite()) {
      throw DivergenceError(static_cast<int>(state.step + 1), "non-finite gradient in " + params[i]->name);
    }
  }
  ++state.step;
  const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd& m = state.first_moment[i];
    Eigen::MatrixXd& v = state.second_moment[i];
    const Eigen::MatrixXd& g = params[i]->grad;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
    params[i]->value.array() -=
        state.learning_rate * (m.array() / correction1) / ((v.array() / correction2).sqrt() + state.epsilon);
  }
  model.mark_updated();
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_pgc1(std::span<const Tensor> tensors) {
  ByteWriter w;
  w.magic("PGC1");
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor& t : tensors) {
    require(t.name.size() <= 0xffff, ErrorKind::InvalidArgument, "tensor name too long");
    std::size_t count = 1;
    for (auto d : t.dims) count *= d;
    require(count == t.data.size(), ErrorKind::Shape, "tensor " + t.name + " payload does not match its dims");
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.text(t.name);
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float v : t.data) w.f32(v);
  }
  return w.buffer();
}

std::vector<Tensor> decode_pgc1(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "PGC1");
  r.expect_magic("PGC1");
  const std::uint32_t count = r.u32();
  std::vector<Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    t.name = r.text(r.u16());
    const std::uint32_t rank = r.u32();
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.u32());
      n *= t.dims.back();
    }
    if (n * 4 > r.remaining()) throw Error(ErrorKind::Format, "PGC1: tensor " + t.name + " is truncated");
    t.data.resize(n);
    for (std::size_t k = 0; k < n; ++k) t.data[k] = r.f32();
    tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw Error(ErrorKind::Format, "PGC1: trailing bytes after last tensor");
  return tensors;
}

Tensor matrix_tensor(const std::string& name, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Tensor t{name, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<float>(m(r, c)));
  }
  return t;
}

Eigen::MatrixXd tensor_matrix(const Tensor& t) {
  Eigen::Index rows = 1, cols = 1;
  if (t.dims.size() == 1) {
    rows = t.dims[0];
  } else if (t.dims.size() == 2) {
    rows = t.dims[0];
    cols = t.dims[1];
  } else if (!t.dims.empty()) {
    throw Error(ErrorKind::Format, "tensor " + t.name + " has rank > 2");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = t.data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

const Tensor* find_tensor(std::span<const Tensor> tensors, const std::string& name) {
  for (const Tensor& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

namespace {

constexpr float kLinearKind = 0.0f;
constexpr float kMlpKind = 1.0f;

const Tensor& expect_tensor(std::span<const Tensor> tensors, const std::string& name) {
  const Tensor* t = find_tensor(tensors, name);
  if (t == nullptr) throw Error(ErrorKind::Format, "checkpoint lacks tensor " + name);
  return *t;
}

}  // namespace

std::vector<Tensor> checkpoint_tensors(const Denoiser& model, const AdamState* adam) {
  std::vector<Tensor> out;
  if (const auto* mlp = dynamic_cast<const MlpDenoiser*>(&model)) {
    const MlpShape& s = mlp->shape();
    out.push_back(Tensor{"meta.kind", {1}, {kMlpKind}});
    out.push_back(Tensor{"meta.dims",
                         {4},
                         {static_cast<float>(s.dimension), static_cast<float>(s.condition_dimension),
                          static_cast<float>(s.embedding_dimension), static_cast<float>(s.hidden)}});
  } else {
    out.push_back(Tensor{"meta.kind", {1}, {kLinearKind}});
  }
  const auto params = model.parameters();
  for (const Parameter* p : params) out.push_back(matrix_tensor(p->name, p->value));
  if (adam != nullptr) {
    require(adam->first_moment.size() == params.size(), ErrorKind::Shape, "optimizer state does not match the model");
    out.push_back(Tensor{"adam.step", {1}, {static_cast<float>(adam->step)}});
    out.push_back(Tensor{"adam.hyper",
                         {4},
                         {static_cast<float>(adam->learning_rate), static_cast<float>(adam->beta1),
                          static_cast<float>(adam->beta2), static_cast<float>(adam->epsilon)}});
    for (std::size_t i = 0; i < params.size(); ++i) {
      out.push_back(matrix_tensor("adam.m." + params[i]->name, adam->first_moment[i]));
      out.push_back(matrix_tensor("adam.v." + params[i]->name, adam->second_moment[i]));
    }
  }
  return out;
}

std::unique_ptr<Denoiser> load_denoiser(std::span<const Tensor> tensors) {
  const Tensor& kind = expect_tensor(tensors, "meta.kind");
  require(kind.data.size() == 1, ErrorKind::Format, "meta.kind must be a scalar");
  std::unique_ptr<Denoiser> model;
  if (kind.data[0] == kMlpKind) {
    const Tensor& dims = expect_tensor(tensors, "meta.dims");
    require(dims.data.size() == 4, ErrorKind::Format, "meta.dims must hold 4 entries");
    MlpShape shape{static_cast<Eigen::Index>(dims.data[0]), static_cast<Eigen::Index>(dims.data[1]),
                   static_cast<Eigen::Index>(dims.data[2]), static_cast<Eigen::Index>(dims.data[3])};
    model = std::make_unique<MlpDenoiser>(shape);
  } else if (kind.data[0] == kLinearKind) {
    const Tensor& theta = expect_tensor(tensors, "linear.theta");
    model = std::make_unique<LinearDenoiser>(Eigen::VectorXd(tensor_matrix(theta).col(0)));
  } else {
    throw Error(ErrorKind::Format, "unknown denoiser kind in checkpoint");
  }
  for (Parameter* p : model->parameters()) {
    Eigen::MatrixXd value = tensor_matrix(expect_tensor(tensors, p->name));
    require(value.rows() == p->value.rows() && value.cols() == p->value.cols(), ErrorKind::Shape,
            "checkpoint tensor " + p->name + " has the wrong shape");
    p->value = std::move(value);
  }
  return model;
}

std::optional<AdamState> load_adam_state(std::span<const Tensor> tensors, const Denoiser& model) {
  const Tensor* step = find_tensor(tensors, "adam.step");
  if (step == nullptr) return std::nullopt;
  const Tensor& hyper = expect_tensor(tensors, "adam.hyper");
  require(hyper.data.size() == 4 && step->data.size() == 1, ErrorKind::Format, "malformed adam metadata");
  AdamState s;
  s.step = static_cast<std::int64_t>(step->data[0]);
  s.learning_rate = hyper.data[0];
  s.beta1 = hyper.data[1];
  s.beta2 = hyper.data[2];
  s.epsilon = hyper.data[3];
  for (const Parameter* p : model.parameters()) {
    s.first_moment.push_back(tensor_matrix(expect_tensor(tensors, "adam.m." + p->name)));
    s.second_moment.push_back(tensor_matrix(expect_tensor(tensors, "adam.v." + p->name)));
  }
  return s;
}

void write_checkpoint(const std::filesystem::path& path, std::span<const Tensor> tensors) {
  write_file_bytes(path, encode_pgc1(tensors));
}

std::vector<Tensor> read_checkpoint(const std::filesystem::path& path) { return decode_pgc1(read_file_bytes(path)); }

}  // namespace diffprior
