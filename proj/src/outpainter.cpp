#include "neo/outpainter.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "neo/adam.hpp"
#include "neo/error.hpp"
#include "neo/parallel.hpp"

namespace neo {

Architecture default_architecture() {
  using A = Activation;
  return {
      {4, 24, 3, 1, false, A::Relu},    {24, 48, 3, 2, false, A::Relu},
      {48, 64, 3, 2, false, A::Relu},   {64, 64, 3, 2, false, A::Relu},
      {64, 64, 3, 1, false, A::Relu},   {64, 64, 3, 1, false, A::Relu},
      {64, 48, 3, 1, true, A::Relu},    {48, 32, 3, 1, true, A::Relu},
      {32, 16, 3, 1, true, A::Relu},    {16, 3, 3, 1, false, A::Logistic},
  };
}

Architecture linearized(Architecture arch) {
  for (auto& l : arch) l.activation = Activation::None;
  return arch;
}

namespace {

void validate_architecture(const Architecture& arch) {
  if (arch.empty()) fail(ErrorKind::Architecture, "architecture has no layers");
  if (arch.front().in_channels != 4) {
    fail(ErrorKind::Architecture, "first layer must take 4 channels (RGB + mask)");
  }
  if (arch.back().out_channels != 3) {
    fail(ErrorKind::Architecture, "last layer must produce 3 channels");
  }
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const auto& l = arch[i];
    if (l.in_channels <= 0 || l.out_channels <= 0 || l.kernel <= 0 || l.kernel % 2 == 0 ||
        (l.stride != 1 && l.stride != 2)) {
      fail(ErrorKind::Architecture, "layer " + std::to_string(i) + " has an invalid shape");
    }
    if (i > 0 && arch[i - 1].out_channels != l.in_channels) {
      fail(ErrorKind::Architecture,
           "layer " + std::to_string(i) + " input channels do not match the previous layer");
    }
  }
  int scale = 1;
  for (const auto& l : arch) {
    if (l.upsample) {
      if (scale % 2 != 0) fail(ErrorKind::Architecture, "upsampling above input resolution");
      scale /= 2;
    }
    scale *= l.stride;
  }
  if (scale != 1) fail(ErrorKind::Architecture, "architecture does not return to input resolution");
}

}  // namespace

int downsample_factor(const Architecture& arch) {
  int scale = 1, worst = 1;
  for (const auto& l : arch) {
    if (l.upsample) scale /= 2;
    scale *= l.stride;
    worst = std::max(worst, scale);
  }
  return worst;
}

std::size_t architecture_param_count(const Architecture& arch) {
  std::size_t n = 0;
  for (const auto& l : arch) {
    n += static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel +
         l.out_channels;
  }
  return n;
}

std::vector<std::size_t> OutpaintModel::layer_offsets() const {
  std::vector<std::size_t> out;
  std::size_t off = 0;
  for (const auto& l : arch) {
    out.push_back(off);
    off += static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel +
           l.out_channels;
  }
  return out;
}

void OutpaintModel::validate() const {
  validate_architecture(arch);
  if (params.size() != architecture_param_count(arch)) {
    fail(ErrorKind::Architecture, "parameter count does not match the architecture");
  }
  for (float v : params) {
    if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "model has non-finite parameters");
  }
}

OutpaintModel init_model(const Architecture& arch, std::uint64_t seed) {
  validate_architecture(arch);
  OutpaintModel m;
  m.arch = arch;
  m.params.assign(architecture_param_count(arch), 0.0f);
  std::mt19937_64 rng(seed);
  const auto offsets = m.layer_offsets();
  for (std::size_t i = 0; i + 1 < arch.size(); ++i) {
    const auto& l = arch[i];
    const int fan_in = l.in_channels * l.kernel * l.kernel;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    const std::size_t count = static_cast<std::size_t>(l.out_channels) * fan_in;
    for (std::size_t k = 0; k < count; ++k) {
      m.params[offsets[i] + k] = static_cast<float>(dist(rng));
    }
  }
  return m;
}

namespace {

constexpr char kModelMagic[4] = {'N', 'E', 'O', 'M'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) fail(ErrorKind::Format, "model checkpoint truncated");
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> OutpaintModel::serialize() const {
  std::vector<std::uint8_t> out(kModelMagic, kModelMagic + 4);
  put(out, kModelVersion);
  put(out, static_cast<std::uint32_t>(arch.size()));
  for (const auto& l : arch) {
    put(out, static_cast<std::uint32_t>(l.in_channels));
    put(out, static_cast<std::uint32_t>(l.out_channels));
    put(out, static_cast<std::uint32_t>(l.kernel));
    put(out, static_cast<std::uint32_t>(l.stride));
    put(out, static_cast<std::uint32_t>(l.upsample ? 1 : 0));
    put(out, static_cast<std::uint32_t>(l.activation));
  }
  for (float v : params) put(out, v);
  return out;
}

OutpaintModel OutpaintModel::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) {
    fail(ErrorKind::Format, "not a model checkpoint (bad magic)");
  }
  std::size_t off = 4;
  const auto version = take<std::uint32_t>(bytes, off);
  if (version != kModelVersion) {
    fail(ErrorKind::Format, "unsupported model checkpoint version " + std::to_string(version));
  }
  const auto layers = take<std::uint32_t>(bytes, off);
  if (layers == 0 || layers > 256) fail(ErrorKind::Format, "model checkpoint has bad layer count");
  OutpaintModel m;
  for (std::uint32_t i = 0; i < layers; ++i) {
    LayerSpec l;
    l.in_channels = static_cast<int>(take<std::uint32_t>(bytes, off));
    l.out_channels = static_cast<int>(take<std::uint32_t>(bytes, off));
    l.kernel = static_cast<int>(take<std::uint32_t>(bytes, off));
    l.stride = static_cast<int>(take<std::uint32_t>(bytes, off));
    l.upsample = take<std::uint32_t>(bytes, off) != 0;
    const auto act = take<std::uint32_t>(bytes, off);
    if (act > 2) fail(ErrorKind::Format, "model checkpoint has unknown activation");
    l.activation = static_cast<Activation>(act);
    m.arch.push_back(l);
  }
  try {
    validate_architecture(m.arch);
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("model checkpoint: ") + e.what());
  }
  const std::size_t n = architecture_param_count(m.arch);
  if (bytes.size() != off + n * sizeof(float)) {
    fail(ErrorKind::Format, "model checkpoint length does not match its architecture");
  }
  m.params.resize(n);
  for (auto& v : m.params) v = take<float>(bytes, off);
  return m;
}

void OutpaintModel::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

OutpaintModel OutpaintModel::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return deserialize(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

Canvas canvas_embed(const ImageBuffer& small, const CameraIntrinsics& large_intr) {
  const CameraIntrinsics small_intr{large_intr.focal_px, small.width(), small.height()};
  const auto [ox, oy] = central_offset(small_intr, large_intr);
  Canvas c{large_intr.width, large_intr.height,
           std::vector<float>(4 * static_cast<std::size_t>(large_intr.width) * large_intr.height,
                              0.0f)};
  for (int y = 0; y < small.height(); ++y) {
    for (int x = 0; x < small.width(); ++x) {
      for (int ch = 0; ch < 3; ++ch) c.at(ch, ox + x, oy + y) = small.at(x, y, ch);
      c.at(3, ox + x, oy + y) = 1.0f;
    }
  }
  return c;
}

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct LayerCache {
  int in_w = 0, in_h = 0;    // after the optional upsample
  int out_w = 0, out_h = 0;
  Mat<T> cols;               // im2col of the (upsampled) input
  Mat<T> pre;                // pre-activation
  Mat<T> act;                // post-activation
};

template <typename T>
struct Workspace {
  std::vector<LayerCache<T>> layers;
  Mat<T> input;
  Mat<T> upsampled;
  Mat<T> grad_a, grad_b;
  std::vector<T> residual;
};

template <typename T>
void upsample2(const Mat<T>& x, int w, int h, Mat<T>& out) {
  out.resize(x.rows(), 4 * static_cast<Eigen::Index>(w) * h);
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    for (int y = 0; y < 2 * h; ++y) {
      for (int xx = 0; xx < 2 * w; ++xx) {
        out(c, static_cast<Eigen::Index>(y) * 2 * w + xx) =
            x(c, static_cast<Eigen::Index>(y / 2) * w + xx / 2);
      }
    }
  }
}

template <typename T>
void upsample2_backward(const Mat<T>& g, int w, int h, Mat<T>& out) {
  out.setZero(g.rows(), static_cast<Eigen::Index>(w) * h);
  for (Eigen::Index c = 0; c < g.rows(); ++c) {
    for (int y = 0; y < 2 * h; ++y) {
      for (int xx = 0; xx < 2 * w; ++xx) {
        out(c, static_cast<Eigen::Index>(y / 2) * w + xx / 2) +=
            g(c, static_cast<Eigen::Index>(y) * 2 * w + xx);
      }
    }
  }
}

// Output columns [lo, hi) whose input column ox * stride + offset lies in [0, w).
inline void valid_span(int offset, int stride, int w, int ow, int& lo, int& hi) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  hi = w - 1 - offset < 0 ? 0 : std::min(ow, (w - 1 - offset) / stride + 1);
  lo = std::min(lo, hi);
}

template <typename T>
void im2col(const Mat<T>& x, int w, int h, int k, int stride, int ow, int oh, Mat<T>& cols) {
  const int pad = k / 2;
  const auto channels = static_cast<int>(x.rows());
  cols.resize(static_cast<Eigen::Index>(channels) * k * k, static_cast<Eigen::Index>(ow) * oh);
  for (int c = 0; c < channels; ++c) {
    const T* plane = x.data() + static_cast<std::size_t>(c) * w * h;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        int lo, hi;
        valid_span(kx - pad, stride, w, ow, lo, hi);
        for (int oy = 0; oy < oh; ++oy) {
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w + (kx - pad);
          std::fill(dst, dst + lo, T(0));
          if (stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
          }
          std::fill(dst + hi, dst + ow, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& cols, int channels, int w, int h, int k, int stride, int ow, int oh,
            Mat<T>& x) {
  const int pad = k / 2;
  x.setZero(channels, static_cast<Eigen::Index>(w) * h);
  for (int c = 0; c < channels; ++c) {
    T* plane = x.data() + static_cast<std::size_t>(c) * w * h;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        int lo, hi;
        valid_span(kx - pad, stride, w, ow, lo, hi);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = plane + static_cast<std::size_t>(iy) * w + (kx - pad);
          if (stride == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
T logistic_t(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
struct Net {
  const Architecture& arch;
  const T* params;
  std::vector<std::size_t> offsets;

  Net(const Architecture& a, const T* p) : arch(a), params(p) {
    std::size_t off = 0;
    for (const auto& l : arch) {
      offsets.push_back(off);
      off += static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel +
             l.out_channels;
    }
  }

  [[nodiscard]] Eigen::Map<const Mat<T>> weights(std::size_t i) const {
    const auto& l = arch[i];
    return {params + offsets[i], l.out_channels,
            static_cast<Eigen::Index>(l.in_channels) * l.kernel * l.kernel};
  }
  [[nodiscard]] Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(std::size_t i) const {
    const auto& l = arch[i];
    return {params + offsets[i] + static_cast<std::size_t>(l.out_channels) * l.in_channels *
                                      l.kernel * l.kernel,
            l.out_channels};
  }

  // Runs the stack; the prediction is ws.layers.back().act (3 x H*W).
  void run(const Canvas& canvas, Workspace<T>& ws) const {
    const int factor = downsample_factor(arch);
    if (canvas.width % factor != 0 || canvas.height % factor != 0) {
      fail(ErrorKind::Architecture, "canvas size must be divisible by " + std::to_string(factor));
    }
    ws.layers.resize(arch.size());
    ws.input.resize(4, static_cast<Eigen::Index>(canvas.width) * canvas.height);
    for (Eigen::Index i = 0; i < ws.input.size(); ++i) ws.input.data()[i] = T(canvas.data[i]);
    int w = canvas.width, h = canvas.height;
    const Mat<T>* x = &ws.input;
    for (std::size_t i = 0; i < arch.size(); ++i) {
      const auto& l = arch[i];
      auto& lc = ws.layers[i];
      if (l.upsample) {
        upsample2(*x, w, h, ws.upsampled);
        x = &ws.upsampled;
        w *= 2;
        h *= 2;
      }
      lc.in_w = w;
      lc.in_h = h;
      lc.out_w = (w - 1) / l.stride + 1;
      lc.out_h = (h - 1) / l.stride + 1;
      im2col(*x, w, h, l.kernel, l.stride, lc.out_w, lc.out_h, lc.cols);
      lc.pre.noalias() = weights(i) * lc.cols;
      lc.pre.colwise() += bias(i);
      switch (l.activation) {
        case Activation::None: lc.act = lc.pre; break;
        case Activation::Relu: lc.act = lc.pre.cwiseMax(T(0)); break;
        case Activation::Logistic: lc.act = lc.pre.unaryExpr([](T v) { return logistic_t(v); }); break;
      }
      x = &lc.act;
      w = lc.out_w;
      h = lc.out_h;
    }
  }

  // Composite + L1 loss. Fills ws.residual with out - target.
  double loss(const Canvas& canvas, const ImageBuffer& target, Workspace<T>& ws) const {
    const auto& pred = ws.layers.back().act;
    const int w = canvas.width, h = canvas.height;
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    ws.residual.resize(3 * plane);
    double sum = 0;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          const T m = T(canvas.data[3 * plane + p]);
          const T out = m * T(canvas.data[c * plane + p]) +
                        (T(1) - m) * pred(c, static_cast<Eigen::Index>(p));
          const T r = out - T(target.at(x, y, c));
          ws.residual[c * plane + p] = r;
          sum += std::abs(static_cast<double>(r));
        }
      }
    }
    return sum / static_cast<double>(3 * plane);
  }

  // Accumulates dL/dparams into grad.
  void backward(const Canvas& canvas, Workspace<T>& ws, T* grad) const {
    const std::size_t plane = static_cast<std::size_t>(canvas.width) * canvas.height;
    const T norm = T(1) / T(3 * plane);
    Mat<T>& g = ws.grad_a;
    g.resize(3, static_cast<Eigen::Index>(plane));
    for (int c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < plane; ++p) {
        const T m = T(canvas.data[3 * plane + p]);
        const T r = ws.residual[c * plane + p];
        const T s = r > 0 ? T(1) : (r < 0 ? T(-1) : T(0));
        g(c, static_cast<Eigen::Index>(p)) = (T(1) - m) * s * norm;
      }
    }
    for (std::size_t i = arch.size(); i-- > 0;) {
      const auto& l = arch[i];
      auto& lc = ws.layers[i];
      switch (l.activation) {
        case Activation::None: break;
        case Activation::Relu:
          g = (lc.pre.array() > T(0)).select(g, T(0));
          break;
        case Activation::Logistic:
          g = (g.array() * lc.act.array() * (T(1) - lc.act.array())).matrix();
          break;
      }
      const auto fan = static_cast<Eigen::Index>(l.in_channels) * l.kernel * l.kernel;
      Eigen::Map<Mat<T>> dw(grad + offsets[i], l.out_channels, fan);
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(grad + offsets[i] + l.out_channels * fan,
                                                         l.out_channels);
      dw.noalias() += g * lc.cols.transpose();
      db += g.rowwise().sum();
      if (i == 0) break;
      Mat<T> dcols = weights(i).transpose() * g;
      col2im(dcols, l.in_channels, lc.in_w, lc.in_h, l.kernel, l.stride, lc.out_w, lc.out_h,
             ws.grad_b);
      if (l.upsample) {
        upsample2_backward(ws.grad_b, lc.in_w / 2, lc.in_h / 2, g);
      } else {
        g.swap(ws.grad_b);
      }
    }
  }

  // ReLU on/off pattern and L1 residual signs; equal signatures mean the
  // loss is smooth between two parameter settings.
  void signature(const Workspace<T>& ws, std::vector<std::int8_t>& sig) const {
    sig.clear();
    for (std::size_t i = 0; i < arch.size(); ++i) {
      if (arch[i].activation != Activation::Relu) continue;
      const auto& pre = ws.layers[i].pre;
      for (Eigen::Index k = 0; k < pre.size(); ++k) sig.push_back(pre.data()[k] > T(0));
    }
    for (const T r : ws.residual) sig.push_back(r > 0 ? 1 : (r < 0 ? -1 : 0));
  }
};

ImageBuffer to_image(const Canvas& canvas, const Mat<float>& pred) {
  const std::size_t plane = static_cast<std::size_t>(canvas.width) * canvas.height;
  ImageBuffer out(canvas.width, canvas.height);
  for (int y = 0; y < canvas.height; ++y) {
    for (int x = 0; x < canvas.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * canvas.width + x;
      const float m = canvas.data[3 * plane + p];
      for (int c = 0; c < 3; ++c) {
        // Exact passthrough on the known region.
        out.at(x, y, c) = m == 1.0f ? canvas.data[c * plane + p]
                                    : m * canvas.data[c * plane + p] +
                                          (1.0f - m) * pred(c, static_cast<Eigen::Index>(p));
      }
    }
  }
  return out;
}

void check_canvas(const OutpaintModel& model, const Canvas& canvas) {
  model.validate();
  if (canvas.data.size() != 4 * static_cast<std::size_t>(canvas.width) * canvas.height) {
    fail(ErrorKind::Architecture, "canvas storage does not match its size");
  }
}

}  // namespace

ImageBuffer forward(const OutpaintModel& model, const Canvas& canvas) {
  check_canvas(model, canvas);
  Workspace<float> ws;
  Net<float>(model.arch, model.params.data()).run(canvas, ws);
  return to_image(canvas, ws.layers.back().act);
}

double evaluate_loss(const OutpaintModel& model, const Canvas& canvas, const ImageBuffer& target) {
  check_canvas(model, canvas);
  if (target.width() != canvas.width || target.height() != canvas.height) {
    fail(ErrorKind::InvalidArgument, "target does not match the canvas size");
  }
  Workspace<float> ws;
  Net<float> net(model.arch, model.params.data());
  net.run(canvas, ws);
  return net.loss(canvas, target, ws);
}

void TrainConfig::validate() const {
  if (iterations < 0 || batch_size <= 0 || !(learning_rate > 0) || !(beta1 > 0 && beta1 < 1) ||
      !(beta2 > 0 && beta2 < 1) || !(epsilon > 0)) {
    fail(ErrorKind::InvalidArgument, "train config values must be positive");
  }
  if (loss != "l1") fail(ErrorKind::InvalidArgument, "unsupported loss '" + loss + "'");
  if (lr_schedule != "cosine" && lr_schedule != "constant") {
    fail(ErrorKind::InvalidArgument, "unknown lr_schedule '" + lr_schedule + "'");
  }
}

TrainResult train(OutpaintModel model, const Dataset& dataset, const TrainConfig& cfg,
                  std::uint64_t seed, const TrainProgress& progress) {
  cfg.validate();
  model.validate();
  const auto& m = dataset.manifest;
  if (dataset.pairs.size() != m.records.size()) {
    fail(ErrorKind::InvalidArgument, "dataset images and records are misaligned");
  }
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < m.records.size(); ++i)
    if (m.records[i].kept) kept.push_back(i);
  if (kept.empty()) fail(ErrorKind::InvalidArgument, "training needs at least one kept pair");
  const int factor = downsample_factor(model.arch);
  if (m.large_intr.width % factor != 0 || m.large_intr.height % factor != 0) {
    fail(ErrorKind::Architecture, "pair size must be divisible by " + std::to_string(factor));
  }

  const std::size_t n_params = model.param_count();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  Adam adam(n_params, {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon});
  std::vector<std::vector<float>> item_grads(batch, std::vector<float>(n_params));
  std::vector<double> item_loss(batch);
  std::vector<float> grad(n_params);
  std::vector<Workspace<float>> workspaces(std::max(1, thread_count()));

  std::vector<std::size_t> order = kept;
  std::int64_t order_epoch = -1;
  auto item_at = [&](std::int64_t position) {
    const auto epoch = position / static_cast<std::int64_t>(kept.size());
    if (epoch != order_epoch) {
      order = kept;
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(epoch)};
      std::mt19937_64 rng(seq);
      std::shuffle(order.begin(), order.end(), rng);
      order_epoch = epoch;
    }
    return order[position % static_cast<std::int64_t>(kept.size())];
  };

  TrainResult result;
  result.loss_trace.reserve(cfg.iterations);
  std::vector<std::size_t> items(batch);
  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t j = 0; j < batch; ++j) {
      items[j] = item_at(static_cast<std::int64_t>(it) * cfg.batch_size + static_cast<std::int64_t>(j));
    }
    const Net<float> net(model.arch, model.params.data());
    parallel_chunks(batch, [&](std::size_t begin, std::size_t end, int worker) {
      auto& ws = workspaces[worker];
      for (std::size_t j = begin; j < end; ++j) {
        const auto& pair = dataset.pairs[items[j]];
        const Canvas canvas = canvas_embed(from_rgb8(pair.small), m.large_intr);
        const ImageBuffer target = from_rgb8(pair.large);
        net.run(canvas, ws);
        item_loss[j] = net.loss(canvas, target, ws);
        std::fill(item_grads[j].begin(), item_grads[j].end(), 0.0f);
        net.backward(canvas, ws, item_grads[j].data());
      }
    }, static_cast<int>(workspaces.size()));

    double loss = 0;
    std::fill(grad.begin(), grad.end(), 0.0f);
    for (std::size_t j = 0; j < batch; ++j) {
      loss += item_loss[j];
      for (std::size_t p = 0; p < n_params; ++p) grad[p] += item_grads[j][p];
    }
    loss /= static_cast<double>(batch);
    if (!std::isfinite(loss)) {
      fail(ErrorKind::TrainingDiverged,
           "training diverged: non-finite loss at iteration " + std::to_string(it));
    }
    const float inv = 1.0f / static_cast<float>(batch);
    for (auto& v : grad) v *= inv;
    if (cfg.lr_schedule == "cosine") {
      adam.set_learning_rate(0.5 * cfg.learning_rate *
                             (1.0 + std::cos(std::numbers::pi * it / cfg.iterations)));
    }
    adam.step(model.params, std::span<const float>(grad));
    result.loss_trace.push_back(loss);
    if (progress) progress(it, loss);
  }
  result.model = std::move(model);
  return result;
}

namespace {

template <typename T>
ModelGradCheckResult grad_check_impl(const OutpaintModel& model, const Canvas& canvas,
                                     const ImageBuffer& target,
                                     const ModelGradCheckOptions& options, double floor) {
  std::vector<T> params(model.params.begin(), model.params.end());
  Workspace<T> ws;
  std::vector<T> analytic(params.size(), T(0));
  {
    Net<T> net(model.arch, params.data());
    net.run(canvas, ws);
    net.loss(canvas, target, ws);
    net.backward(canvas, ws, analytic.data());
  }
  const auto offsets = model.layer_offsets();
  if (options.corrupt_backward) {
    const auto& l = model.arch[0];
    const std::size_t n = static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel;
    for (std::size_t k = 0; k < n; ++k) analytic[offsets[0] + k] *= T(2);
  }

  // Candidates spread evenly across layers, in random order within each.
  std::mt19937_64 rng(options.seed);
  std::vector<std::vector<std::size_t>> per_layer(model.arch.size());
  for (std::size_t i = 0; i < model.arch.size(); ++i) {
    const std::size_t end = i + 1 < offsets.size() ? offsets[i + 1] : params.size();
    per_layer[i].resize(end - offsets[i]);
    std::iota(per_layer[i].begin(), per_layer[i].end(), offsets[i]);
    std::shuffle(per_layer[i].begin(), per_layer[i].end(), rng);
  }
  std::vector<std::size_t> candidates;
  for (std::size_t round = 0; candidates.size() < params.size(); ++round) {
    for (auto& layer : per_layer)
      if (round < layer.size()) candidates.push_back(layer[round]);
  }

  ModelGradCheckResult result;
  std::vector<std::int8_t> sig_up, sig_down;
  for (const std::size_t i : candidates) {
    if (result.checked >= options.max_params) break;
    const T original = params[i];
    Net<T> net(model.arch, params.data());
    params[i] = original + T(options.step);
    const T up_value = params[i];
    net.run(canvas, ws);
    const double up = net.loss(canvas, target, ws);
    net.signature(ws, sig_up);
    params[i] = original - T(options.step);
    const T down_value = params[i];
    net.run(canvas, ws);
    const double down = net.loss(canvas, target, ws);
    net.signature(ws, sig_down);
    params[i] = original;
    if (sig_up != sig_down) {
      ++result.skipped_kinks;
      continue;
    }
    const double numeric = (up - down) / static_cast<double>(up_value - down_value);
    const double a = static_cast<double>(analytic[i]);
    const double scale = std::max({std::abs(a), std::abs(numeric), floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / scale);
    ++result.checked;
  }
  return result;
}

}  // namespace

ModelGradCheckResult grad_check_model(const OutpaintModel& model, const Canvas& canvas,
                                      const ImageBuffer& target,
                                      const ModelGradCheckOptions& options) {
  check_canvas(model, canvas);
  if (target.width() != canvas.width || target.height() != canvas.height) {
    fail(ErrorKind::InvalidArgument, "target does not match the canvas size");
  }
  // Denominator floor keeps parameters with (near) zero gradient from
  // turning rounding noise into a relative error.
  return options.double_precision
             ? grad_check_impl<double>(model, canvas, target, options, 1e-8)
             : grad_check_impl<float>(model, canvas, target, options, 1e-4);
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> trace) {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  f << "iteration,loss\n";
  f.precision(9);
  for (std::size_t i = 0; i < trace.size(); ++i) f << i << ',' << trace[i] << '\n';
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"iterations", c.iterations}, {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
       {"beta2", c.beta2}, {"epsilon", c.epsilon}, {"loss", c.loss},
       {"lr_schedule", c.lr_schedule}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.iterations = j.value("iterations", d.iterations);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.loss = j.value("loss", d.loss);
  c.lr_schedule = j.value("lr_schedule", d.lr_schedule);
}

void to_json(nlohmann::json& j, const LayerSpec& l) {
  static const char* names[] = {"none", "relu", "logistic"};
  j = {{"in", l.in_channels}, {"out", l.out_channels}, {"kernel", l.kernel},
       {"stride", l.stride}, {"upsample", l.upsample},
       {"activation", names[static_cast<int>(l.activation)]}};
}

void from_json(const nlohmann::json& j, LayerSpec& l) {
  l.in_channels = j.at("in").get<int>();
  l.out_channels = j.at("out").get<int>();
  l.kernel = j.value("kernel", 3);
  l.stride = j.value("stride", 1);
  l.upsample = j.value("upsample", false);
  const auto act = j.value("activation", std::string("relu"));
  if (act == "none") l.activation = Activation::None;
  else if (act == "relu") l.activation = Activation::Relu;
  else if (act == "logistic") l.activation = Activation::Logistic;
  else fail(ErrorKind::InvalidArgument, "unknown activation '" + act + "'");
}

}  // namespace neo
