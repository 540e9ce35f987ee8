#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace ser {

/// In-place iterative radix-2 transform; size must be a power of two.
/// The inverse applies 1/n scaling.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse);

/// Forward transform of a real signal, returning the full complex spectrum
/// of length x.size(). Falls back to a direct O(n^2) DFT when the size is
/// not a power of two.
std::vector<std::complex<double>> fft_real(const std::vector<double>& x);

inline bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace ser
