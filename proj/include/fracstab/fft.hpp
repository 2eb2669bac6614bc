#pragma once

#include <fftw3.h>

#include <complex>
#include <memory>
#include <mutex>
#include <vector>

namespace fracstab {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// Real-to-complex transform pair of fixed shape. Plans are built once (FFTW_ESTIMATE,
// so results do not depend on timing) and executed on fresh aligned buffers, which
// keeps execution thread-safe.
class RealFFT {
public:
    explicit RealFFT(std::vector<int> dims) : dims_(std::move(dims)) {
        nreal_ = 1;
        for (int d : dims_) nreal_ *= d;
        ncomplex_ = nreal_ / dims_.back() * (dims_.back() / 2 + 1);
        auto in = real_buffer();
        auto out = complex_buffer();
        std::lock_guard lock(fftw_planner_mutex());
        const int rank = static_cast<int>(dims_.size());
        fwd_ = fftw_plan_dft_r2c(rank, dims_.data(), in.get(), out.get(), FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_c2r(rank, dims_.data(), out.get(), in.get(), FFTW_ESTIMATE);
    }
    RealFFT(const RealFFT&) = delete;
    RealFFT& operator=(const RealFFT&) = delete;
    ~RealFFT() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }

    struct FreeDeleter {
        void operator()(void* p) const { fftw_free(p); }
    };
    using RealBuf = std::unique_ptr<double[], FreeDeleter>;
    using ComplexBuf = std::unique_ptr<fftw_complex[], FreeDeleter>;

    RealBuf real_buffer() const { return RealBuf(fftw_alloc_real(nreal_)); }
    ComplexBuf complex_buffer() const { return ComplexBuf(fftw_alloc_complex(ncomplex_)); }

    size_t real_size() const { return nreal_; }
    size_t complex_size() const { return ncomplex_; }
    const std::vector<int>& dims() const { return dims_; }

    void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(fwd_, in, out); }
    // unnormalized; destroys `in`
    void backward(fftw_complex* in, double* out) const { fftw_execute_dft_c2r(bwd_, in, out); }

private:
    std::vector<int> dims_;
    size_t nreal_ = 0, ncomplex_ = 0;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

} // namespace fracstab
