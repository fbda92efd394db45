#include "dlsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dlsr {

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_string(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_numel(shape_))
        throw std::invalid_argument("tensor value count does not match shape " + shape_string(shape_));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
        throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    return Tensor(std::move(shape), data_);
}

double Tensor::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor sample_of(const Tensor& batch, int n) {
    if (batch.rank() != 4) throw std::invalid_argument("sample_of expects NCHW, got " + shape_string(batch.shape()));
    const Shape s{batch.dim(1), batch.dim(2), batch.dim(3)};
    const std::size_t per = shape_numel(s);
    std::vector<double> v(batch.data() + per * n, batch.data() + per * (n + 1));
    return Tensor(s, std::move(v));
}

Tensor stack_samples(std::span<const Tensor> samples) {
    if (samples.empty()) throw std::invalid_argument("stack_samples: no samples");
    const Shape& s = samples.front().shape();
    if (s.size() != 3) throw std::invalid_argument("stack_samples expects CHW samples");
    Tensor out({static_cast<int>(samples.size()), s[0], s[1], s[2]});
    const std::size_t per = shape_numel(s);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].shape() != s) throw std::invalid_argument("stack_samples: shape mismatch");
        std::copy(samples[i].data(), samples[i].data() + per, out.data() + per * i);
    }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace dlsr
