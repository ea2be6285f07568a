#pragma once

// Thin RAII wrapper over GSL's Nelder-Mead simplex (nmsimplex2).

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "ptsel/errors.hpp"

namespace ptsel {

struct NelderMeadOptions {
    int max_iterations = 400;
    double size_tolerance = 1e-5;  ///< stop once the simplex characteristic size drops below this
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Non-finite objective values are replaced by this penalty so the simplex
/// simply moves away from them.
inline constexpr double kNonFinitePenalty = 1e100;

namespace detail {

struct GslMinimizerDeleter {
    void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};
struct GslVectorDeleter {
    void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

inline void disable_gsl_abort() {
    static const bool once = [] {
        gsl_set_error_handler_off();
        return true;
    }();
    (void)once;
}

template <class F>
struct Trampoline {
    F* f;
    std::vector<double> scratch;
    int evaluations = 0;

    static double call(const gsl_vector* v, void* self_ptr) {
        auto* self = static_cast<Trampoline*>(self_ptr);
        for (std::size_t i = 0; i < v->size; ++i) self->scratch[i] = gsl_vector_get(v, i);
        ++self->evaluations;
        const double value = (*self->f)(std::span<const double>(self->scratch));
        return std::isfinite(value) ? value : kNonFinitePenalty;
    }
};

}  // namespace detail

/// Minimize f: span<const double> -> double from `start`, with initial simplex
/// edge lengths `step`.
template <class F>
NelderMeadResult minimize_nelder_mead(F&& f, std::span<const double> start, std::span<const double> step,
                                      const NelderMeadOptions& options = {}) {
    require(!start.empty() && start.size() == step.size(), ErrorCode::invalid_argument,
            "nelder-mead: start and step must be nonempty and equal length");
    detail::disable_gsl_abort();
    const auto dim = start.size();

    using Fn = std::remove_reference_t<F>;
    detail::Trampoline<Fn> tramp{&f, std::vector<double>(dim), 0};
    gsl_multimin_function fn{&detail::Trampoline<Fn>::call, dim, &tramp};

    std::unique_ptr<gsl_vector, detail::GslVectorDeleter> x0(gsl_vector_alloc(dim));
    std::unique_ptr<gsl_vector, detail::GslVectorDeleter> ss(gsl_vector_alloc(dim));
    for (std::size_t i = 0; i < dim; ++i) {
        gsl_vector_set(x0.get(), i, start[i]);
        gsl_vector_set(ss.get(), i, step[i]);
    }
    std::unique_ptr<gsl_multimin_fminimizer, detail::GslMinimizerDeleter> solver(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim));
    require(gsl_multimin_fminimizer_set(solver.get(), &fn, x0.get(), ss.get()) == GSL_SUCCESS,
            ErrorCode::optim_failed, "nelder-mead: could not initialize simplex");

    NelderMeadResult result;
    for (result.iterations = 0; result.iterations < options.max_iterations;) {
        ++result.iterations;
        if (gsl_multimin_fminimizer_iterate(solver.get()) != GSL_SUCCESS) break;
        const double size = gsl_multimin_fminimizer_size(solver.get());
        if (gsl_multimin_test_size(size, options.size_tolerance) == GSL_SUCCESS) {
            result.converged = true;
            break;
        }
    }
    const gsl_vector* best = gsl_multimin_fminimizer_x(solver.get());
    result.x.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) result.x[i] = gsl_vector_get(best, i);
    result.value = gsl_multimin_fminimizer_minimum(solver.get());
    result.evaluations = tramp.evaluations;
    return result;
}

}  // namespace ptsel
