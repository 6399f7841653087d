#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vqdisc/tensor.hpp"

namespace vqdisc {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Per-sample gradient buffer laid out like a ParamSet.
using Gradients = std::vector<Tensor>;

/// Ordered collection of uniquely named trainable arrays.
class ParamSet {
public:
    std::size_t add(std::string name, Tensor value);
    std::size_t index(const std::string& name) const;
    bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    const Tensor& value(std::size_t i) const { return params_[i].value; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    Gradients make_gradients() const;
    void zero_grad();
    // grad += scale * g, in parameter order.
    void accumulate(const Gradients& g, Real scale = Real(1));
    std::size_t scalar_count() const;

private:
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> by_name_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace vqdisc
