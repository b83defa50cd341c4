#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cpat/tensor.hpp"

namespace cpat {

// Ordered named parameter collection. Insertion order is the serialization
// order, so stores built the same way are byte-identical on disk.
template <typename T>
class WeightStore {
public:
    void add(const std::string& name, Tensor<T> value) {
        if (index_.count(name))
            throw ConfigError(cat("weight store: duplicate parameter '", name, "'"));
        index_[name] = order_.size();
        order_.push_back(name);
        values_.push_back(std::move(value));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const Tensor<T>& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            throw ConfigError(cat("weight store: missing parameter '", name, "'"));
        return values_[it->second];
    }

    void set(const std::string& name, Tensor<T> value) {
        auto it = index_.find(name);
        if (it == index_.end())
            throw ConfigError(cat("weight store: missing parameter '", name, "'"));
        if (value.shape() != values_[it->second].shape())
            throw ShapeError(cat("weight store: '", name, "' shape ",
                                 shape_str(values_[it->second].shape()), " cannot become ",
                                 shape_str(value.shape())));
        values_[it->second] = std::move(value);
    }

    size_t size() const { return order_.size(); }
    const std::vector<std::string>& names() const { return order_; }
    const Tensor<T>& at(size_t i) const { return values_[i]; }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& v : values_) n += v.numel();
        return n;
    }

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, size_t> index_;
    std::vector<Tensor<T>> values_;
};

} // namespace cpat
