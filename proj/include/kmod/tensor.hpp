#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace kmod {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major float64 array with an optional gradient slot.
//
// Tensor is a shared handle: copies alias the same storage, which is what the
// tape needs to route gradients back to parameters. Use clone() for an
// independent deep copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor scalar(double value) { return Tensor(Shape{1}, value); }
    static Tensor vector(std::initializer_list<double> values);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0);
    static Tensor uniform(Shape shape, std::mt19937_64& rng, double lo, double hi);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size(std::size_t axis) const;
    std::size_t numel() const;

    std::span<double> data();
    std::span<const double> data() const;
    double item() const;
    double& operator[](std::size_t i) { return data()[i]; }
    double operator[](std::size_t i) const { return data()[i]; }

    bool requires_grad() const;
    void set_requires_grad(bool value);

    bool has_grad() const;
    std::span<double> grad();
    std::span<const double> grad() const;
    // Allocates a zero gradient if none is present.
    std::span<double> ensure_grad();
    void zero_grad();
    void clear_grad();

    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Impl {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool has_grad = false;
        bool requires_grad = false;
    };

    Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
    Impl& impl();
    const Impl& impl() const;

    std::shared_ptr<Impl> impl_;
};

// Throws std::invalid_argument naming both shapes when they differ.
void check_same_shape(const char* op, const Tensor& a, const Tensor& b);

}  // namespace kmod
