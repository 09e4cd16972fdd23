#pragma once

// Named, ordered collection of trainable tensors, plus the central-difference
// gradient oracle used to verify every analytic adjoint in the library.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deepcast/errors.hpp"
#include "deepcast/tensor.hpp"

namespace deepcast {

class ParameterSet {
public:
    // Insertion order is the declared order: it fixes initialization draws,
    // optimizer-state alignment, and checkpoint layout.
    Tensor& add(std::string name, Tensor t) {
        if (find(name) != nullptr) {
            throw Error("parameter set: duplicate name '" + name + "'");
        }
        names_.push_back(std::move(name));
        tensors_.push_back(std::move(t));
        return tensors_.back();
    }

    std::size_t count() const { return tensors_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const Tensor& t : tensors_) n += t.size();
        return n;
    }

    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& tensor(std::size_t i) { return tensors_[i]; }
    const Tensor& tensor(std::size_t i) const { return tensors_[i]; }

    Tensor* find(std::string_view name) {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == name) return &tensors_[i];
        }
        return nullptr;
    }
    const Tensor* find(std::string_view name) const {
        return const_cast<ParameterSet*>(this)->find(name);
    }

    Tensor& get(std::string_view name) {
        Tensor* t = find(name);
        if (t == nullptr) throw Error("parameter set: unknown name '" + std::string(name) + "'");
        return *t;
    }
    const Tensor& get(std::string_view name) const {
        return const_cast<ParameterSet*>(this)->get(name);
    }

    ParameterSet zeros_like() const {
        ParameterSet z;
        for (std::size_t i = 0; i < count(); ++i) {
            z.add(names_[i], Tensor(tensors_[i].shape()));
        }
        return z;
    }

    bool same_layout(const ParameterSet& other) const {
        if (count() != other.count()) return false;
        for (std::size_t i = 0; i < count(); ++i) {
            if (names_[i] != other.names_[i]) return false;
            if (!tensors_[i].same_shape(other.tensors_[i])) return false;
        }
        return true;
    }

    bool all_finite() const {
        for (const Tensor& t : tensors_) {
            if (!t.all_finite()) return false;
        }
        return true;
    }

    // In-place elementwise accumulation; layouts must agree.
    void accumulate(const ParameterSet& other) {
        if (!same_layout(other)) throw ShapeError("parameter set: accumulate layout mismatch");
        for (std::size_t i = 0; i < count(); ++i) {
            Tensor& dst = tensors_[i];
            const Tensor& src = other.tensors_[i];
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
    }

    void scale(double factor) {
        for (Tensor& t : tensors_) {
            for (std::size_t k = 0; k < t.size(); ++k) t[k] *= factor;
        }
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
};

// Central differences (f(p + step*e) - f(p - step*e)) / (2*step) for every
// scalar entry. f must be deterministic; the result has the layout of
// `params`. This is the independent oracle: it never touches the tape.
inline ParameterSet finite_difference_gradient(
    const std::function<double(const ParameterSet&)>& f,
    const ParameterSet& params, double step) {
    if (!(step > 0.0)) throw OracleError("finite differences: step must be positive");
    ParameterSet grads = params.zeros_like();
    ParameterSet work;
    for (std::size_t i = 0; i < params.count(); ++i) {
        work.add(params.name(i), params.tensor(i));
    }
    for (std::size_t i = 0; i < work.count(); ++i) {
        Tensor& t = work.tensor(i);
        for (std::size_t k = 0; k < t.size(); ++k) {
            const double orig = t[k];
            t[k] = orig + step;
            const double fp = f(work);
            t[k] = orig - step;
            const double fm = f(work);
            t[k] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw OracleError("finite differences: non-finite evaluation at parameter '" +
                                  params.name(i) + "'");
            }
            grads.tensor(i)[k] = (fp - fm) / (2.0 * step);
        }
    }
    return grads;
}

}  // namespace deepcast
