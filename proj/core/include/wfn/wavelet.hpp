#pragma once

#include <string_view>
#include <vector>

#include "wfn/autodiff.hpp"

namespace wfn {

/// Orthonormal Daubechies families. Haar is db1.
enum class WaveletFamily { Haar, Db2, Db4 };

WaveletFamily parse_wavelet_family(std::string_view name);
std::string_view wavelet_name(WaveletFamily family);

/// Analysis filters of an orthonormal two-channel bank.
/// highpass[k] = (-1)^k * lowpass[L-1-k].
struct FilterPair {
  std::vector<double> lowpass;
  std::vector<double> highpass;
};

FilterPair make_filters(WaveletFamily family);

/// Boundary handling is always periodization, so every level halves both
/// extents exactly and inverts exactly.
struct WaveletSpec {
  WaveletFamily family = WaveletFamily::Db2;
  int levels = 1;
};

/// One decomposition level, each band [N,C,H/2,W/2].
///
/// lh is low-pass along W and high-pass along H (horizontal detail), hl the
/// converse, hh high-pass along both.
struct SubbandSet {
  Tensor ll, lh, hl, hh;
};

/// Single-level separable analysis: rows (W axis) first, then columns.
/// Throws ShapeError on odd H or W.
SubbandSet dwt2d(const Tensor& x, WaveletFamily family);
/// Exact synthesis; inverse and adjoint of dwt2d.
Tensor idwt2d(const SubbandSet& bands, WaveletFamily family);

/// Multi-level analysis; element i holds level i+1, whose ll feeds the next
/// level. Only the last ll is needed for reconstruction.
std::vector<SubbandSet> wavedec2(const Tensor& x, const WaveletSpec& spec);
Tensor waverec2(const std::vector<SubbandSet>& levels, WaveletFamily family);

namespace ops {
/// [N,C,H,W] -> [N,4C,H/2,W/2], channel blocks ordered (LL, LH, HL, HH).
Var dwt2d(Var x, WaveletFamily family);
/// [N,4C,H,W] in the dwt2d channel layout -> [N,C,2H,2W].
Var idwt2d(Var bands, WaveletFamily family);
}  // namespace ops

}  // namespace wfn
