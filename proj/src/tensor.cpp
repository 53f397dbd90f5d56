#include "kmod/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace kmod {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one axis");
    for (auto d : shape) {
        if (d == 0) throw std::invalid_argument("tensor shape entries must be >= 1, got " + to_string(shape));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
    validate_shape(shape);
    auto impl = std::make_shared<Impl>();
    impl->data.assign(kmod::numel(shape), fill);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    impl_ = std::move(impl);
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    validate_shape(shape);
    if (kmod::numel(shape) != data.size()) {
        throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                    " does not match shape " + to_string(shape));
    }
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    impl_ = std::move(impl);
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : t.data()) x = dist(rng);
    return t;
}

Tensor Tensor::uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& x : t.data()) x = dist(rng);
    return t;
}

Tensor::Impl& Tensor::impl() {
    if (!impl_) throw std::logic_error("access to undefined tensor");
    return *impl_;
}

const Tensor::Impl& Tensor::impl() const {
    if (!impl_) throw std::logic_error("access to undefined tensor");
    return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::size(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<double> Tensor::data() { return impl().data; }
std::span<const double> Tensor::data() const { return impl().data; }

double Tensor::item() const {
    if (numel() != 1) throw std::invalid_argument("item() on non-scalar tensor of shape " + to_string(shape()));
    return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
void Tensor::set_requires_grad(bool value) { impl().requires_grad = value; }

bool Tensor::has_grad() const { return impl_ && impl_->has_grad; }

std::span<double> Tensor::grad() {
    if (!has_grad()) throw std::logic_error("tensor has no gradient");
    return impl().grad;
}

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw std::logic_error("tensor has no gradient");
    return impl().grad;
}

std::span<double> Tensor::ensure_grad() {
    auto& im = impl();
    if (!im.has_grad) {
        im.grad.assign(im.data.size(), 0.0);
        im.has_grad = true;
    }
    return im.grad;
}

void Tensor::zero_grad() {
    auto& im = impl();
    if (im.has_grad) std::fill(im.grad.begin(), im.grad.end(), 0.0);
}

void Tensor::clear_grad() {
    auto& im = impl();
    im.grad.clear();
    im.has_grad = false;
}

Tensor Tensor::clone() const {
    const auto& im = impl();
    return Tensor(im.shape, im.data, false);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string("shape mismatch in ") + op + ": " + to_string(a.shape()) +
                                    " vs " + to_string(b.shape()));
    }
}

}  // namespace kmod
