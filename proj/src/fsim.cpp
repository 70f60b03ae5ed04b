#include "hashodf/fsim.hpp"

#include "hashodf/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace hashodf {

namespace {

using CImage = Eigen::Array<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Unnormalised forward / normalised inverse 2-D DFT, matching fft2 / ifft2.
CImage dft2(CImage in, bool inverse) {
  CImage out(in.rows(), in.cols());
  auto* src = reinterpret_cast<fftw_complex*>(in.data());
  auto* dst = reinterpret_cast<fftw_complex*>(out.data());
  fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(in.rows()), static_cast<int>(in.cols()), src, dst,
                                    inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  if (inverse) out /= static_cast<double>(in.size());
  return out;
}

// Frequency coordinate of DFT index i after ifftshift of the centred grid used by the filter code.
double freq(Eigen::Index i, Eigen::Index n) {
  const Eigen::Index half = n / 2;
  const Eigen::Index centred = (i + half) % n - half;
  return static_cast<double>(centred) / static_cast<double>(n % 2 ? n - 1 : n);
}

// conv2(im, kernel, 'same') with zero padding.
Image conv_same(const Image& im, const Image& k) {
  Image out = Image::Zero(im.rows(), im.cols());
  const Eigen::Index oy = k.rows() / 2;
  const Eigen::Index ox = k.cols() / 2;
  for (Eigen::Index i = 0; i < im.rows(); ++i) {
    for (Eigen::Index j = 0; j < im.cols(); ++j) {
      double acc = 0.0;
      for (Eigen::Index a = 0; a < k.rows(); ++a) {
        const Eigen::Index y = i + oy - a;
        if (y < 0 || y >= im.rows()) continue;
        for (Eigen::Index b = 0; b < k.cols(); ++b) {
          const Eigen::Index x = j + ox - b;
          if (x < 0 || x >= im.cols()) continue;
          acc += im(y, x) * k(a, b);
        }
      }
      out(i, j) = acc;
    }
  }
  return out;
}

Image downsample(const Image& im, int f) {
  if (f <= 1) return im;
  const Image avg = conv_same(im, Image::Constant(f, f, 1.0 / (f * f)));
  Image out((im.rows() + f - 1) / f, (im.cols() + f - 1) / f);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = avg(i * f, j * f);
  }
  return out;
}

Image gradient_magnitude(const Image& im) {
  Image dx(3, 3), dy(3, 3);
  dx << 3, 0, -3, 10, 0, -10, 3, 0, -3;
  dy << 3, 10, 3, 0, 0, 0, -3, -10, -3;
  dx /= 16.0;
  dy /= 16.0;
  return (conv_same(im, dx).square() + conv_same(im, dy).square()).sqrt();
}

double median_of(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

void check_same_shape(const Image& a, const Image& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InputError("fsim: image shapes differ");
  if (a.size() == 0) throw InputError("fsim: empty image");
}

}  // namespace

Image phase_congruency(const Image& im) {
  constexpr int nscale = 4;
  constexpr int norient = 4;
  constexpr double min_wavelength = 6.0;
  constexpr double mult = 2.0;
  constexpr double sigma_onf = 0.55;
  constexpr double d_theta_on_sigma = 1.2;
  constexpr double k = 2.0;
  constexpr double epsilon = 1e-4;
  const double theta_sigma = std::numbers::pi / norient / d_theta_on_sigma;

  const Eigen::Index rows = im.rows();
  const Eigen::Index cols = im.cols();
  const double scale = std::sqrt(static_cast<double>(rows * cols));
  const CImage image_fft = dft2(im.cast<std::complex<double>>(), false);

  Image radius(rows, cols), sintheta(rows, cols), costheta(rows, cols), lowpass(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double y = freq(i, rows);
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double x = freq(j, cols);
      const double r = std::sqrt(x * x + y * y);
      const double theta = std::atan2(-y, x);
      radius(i, j) = r;
      sintheta(i, j) = std::sin(theta);
      costheta(i, j) = std::cos(theta);
      lowpass(i, j) = 1.0 / (1.0 + std::pow(r / 0.45, 2 * 15));
    }
  }
  radius(0, 0) = 1.0;

  std::array<Image, nscale> log_gabor;
  for (int s = 0; s < nscale; ++s) {
    const double fo = 1.0 / (min_wavelength * std::pow(mult, s));
    const double denom = 2.0 * std::pow(std::log(sigma_onf), 2);
    log_gabor[s] = (-(radius / fo).log().square() / denom).exp() * lowpass;
    log_gabor[s](0, 0) = 0.0;
  }

  Image energy_all = Image::Zero(rows, cols);
  Image an_all = Image::Zero(rows, cols);
  for (int o = 0; o < norient; ++o) {
    const double angle = o * std::numbers::pi / norient;
    Image spread(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        const double ds = sintheta(i, j) * std::cos(angle) - costheta(i, j) * std::sin(angle);
        const double dc = costheta(i, j) * std::cos(angle) + sintheta(i, j) * std::sin(angle);
        const double dtheta = std::abs(std::atan2(ds, dc));
        spread(i, j) = std::exp(-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma));
      }
    }

    Image sum_e = Image::Zero(rows, cols), sum_o = Image::Zero(rows, cols), sum_an = Image::Zero(rows, cols);
    std::array<CImage, nscale> eo;
    std::array<Image, nscale> ifft_filter;
    double em_n = 0.0;
    for (int s = 0; s < nscale; ++s) {
      const Image filter = log_gabor[s] * spread;
      ifft_filter[s] = dft2(filter.cast<std::complex<double>>(), true).real() * scale;
      eo[s] = dft2(image_fft * filter.cast<std::complex<double>>(), true);
      sum_an += eo[s].abs();
      sum_e += eo[s].real();
      sum_o += eo[s].imag();
      if (s == 0) em_n = filter.square().sum();
    }
    const Image x_energy = (sum_e.square() + sum_o.square()).sqrt() + epsilon;
    const Image mean_e = sum_e / x_energy;
    const Image mean_o = sum_o / x_energy;
    Image energy = Image::Zero(rows, cols);
    for (int s = 0; s < nscale; ++s) {
      const Image e = eo[s].real();
      const Image od = eo[s].imag();
      energy += e * mean_e + od * mean_o - (e * mean_o - od * mean_e).abs();
    }

    const Image e2 = eo[0].abs2();
    const double median_e2n = median_of(std::vector<double>(e2.data(), e2.data() + e2.size()));
    const double mean_e2n = -median_e2n / std::log(0.5);
    const double noise_power = mean_e2n / em_n;

    double sum_an2 = 0.0;
    double sum_aiaj = 0.0;
    for (int s = 0; s < nscale; ++s) sum_an2 += ifft_filter[s].square().sum();
    for (int si = 0; si < nscale - 1; ++si) {
      for (int sj = si + 1; sj < nscale; ++sj) sum_aiaj += (ifft_filter[si] * ifft_filter[sj]).sum();
    }
    const double est_noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_aiaj;
    const double tau = std::sqrt(est_noise_energy2 / 2.0);
    const double est_noise_energy = tau * std::sqrt(std::numbers::pi / 2.0);
    const double est_noise_sigma = std::sqrt((2.0 - std::numbers::pi / 2.0) * tau * tau);
    const double t = (est_noise_energy + k * est_noise_sigma) / 1.7;

    energy_all += (energy - t).max(0.0);
    an_all += sum_an;
  }
  return (an_all > 0.0).select(energy_all / an_all, 0.0);
}

namespace {

struct Similarity {
  Image pc_grad;  // S_PC * S_G
  Image weight;   // max(PC1, PC2)
};

Similarity luma_similarity(const Image& y1, const Image& y2) {
  constexpr double t1 = 0.85;
  constexpr double t2 = 160.0;
  const Image pc1 = phase_congruency(y1);
  const Image pc2 = phase_congruency(y2);
  const Image g1 = gradient_magnitude(y1);
  const Image g2 = gradient_magnitude(y2);
  const Image pc_sim = (2.0 * pc1 * pc2 + t1) / (pc1.square() + pc2.square() + t1);
  const Image g_sim = (2.0 * g1 * g2 + t2) / (g1.square() + g2.square() + t2);
  return {pc_sim * g_sim, pc1.max(pc2)};
}

FsimScore pooled(const Image& sim, const Image& weight) {
  const double denom = weight.sum();
  if (!(denom > 0.0) || !std::isfinite(denom)) return {std::numeric_limits<double>::quiet_NaN(), true};
  return {(sim * weight).sum() / denom, false};
}

int downsample_factor(const Image& im) {
  return std::max(1, static_cast<int>(std::lround(static_cast<double>(std::min(im.rows(), im.cols())) / 256.0)));
}

}  // namespace

FsimScore fsim(const Image& ref, const Image& test) {
  check_same_shape(ref, test);
  if (!ref.allFinite() || !test.allFinite()) throw InputError("fsim: non-finite pixel");
  const int f = downsample_factor(ref);
  const Similarity s = luma_similarity(downsample(ref, f), downsample(test, f));
  return pooled(s.pc_grad, s.weight);
}

FsimScore fsim_color(const std::array<Image, 3>& ref, const std::array<Image, 3>& test) {
  for (int c = 0; c < 3; ++c) {
    check_same_shape(ref[0], ref[c]);
    check_same_shape(ref[c], test[c]);
    if (!ref[c].allFinite() || !test[c].allFinite()) throw InputError("fsim: non-finite pixel");
  }
  const auto yiq = [](const std::array<Image, 3>& rgb) {
    return std::array<Image, 3>{0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2],
                                0.596 * rgb[0] - 0.274 * rgb[1] - 0.322 * rgb[2],
                                0.211 * rgb[0] - 0.523 * rgb[1] + 0.312 * rgb[2]};
  };
  auto a = yiq(ref);
  auto b = yiq(test);
  const int f = downsample_factor(ref[0]);
  for (int c = 0; c < 3; ++c) {
    a[c] = downsample(a[c], f);
    b[c] = downsample(b[c], f);
  }
  constexpr double t3 = 200.0;
  constexpr double t4 = 200.0;
  constexpr double lambda = 0.03;
  const Similarity s = luma_similarity(a[0], b[0]);
  const Image i_sim = (2.0 * a[1] * b[1] + t3) / (a[1].square() + b[1].square() + t3);
  const Image q_sim = (2.0 * a[2] * b[2] + t4) / (a[2].square() + b[2].square() + t4);
  // real((I*Q)^lambda): a negative base gives cos(lambda*pi)*|base|^lambda.
  const Image iq = i_sim * q_sim;
  const Image chroma = iq.abs().pow(lambda) * (iq < 0.0).select(Image::Constant(iq.rows(), iq.cols(), std::cos(lambda * std::numbers::pi)), 1.0);
  return pooled(s.pc_grad * chroma, s.weight);
}

namespace {

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Slice `index` along `axis` of channel c; rows/cols are the two remaining axes in order.
Image slice_of(const Volume& v, const Mask& mask, int axis, int index, int c, double offset, double scale) {
  const int a = axis == 0 ? 1 : 0;
  const int b = axis == 2 ? 1 : 2;
  Image out(v.dims[a], v.dims[b]);
  std::array<int, 3> p{};
  p[axis] = index;
  for (int i = 0; i < v.dims[a]; ++i) {
    for (int j = 0; j < v.dims[b]; ++j) {
      p[a] = i;
      p[b] = j;
      const auto vox = v.voxel_index(p[0], p[1], p[2]);
      out(i, j) = mask[vox] ? (v.at(vox, c) - offset) * scale : 0.0;
    }
  }
  return out;
}

bool slice_has_mask(const Volume& v, const Mask& mask, int axis, int index) {
  const int a = axis == 0 ? 1 : 0;
  const int b = axis == 2 ? 1 : 2;
  std::array<int, 3> p{};
  p[axis] = index;
  for (int i = 0; i < v.dims[a]; ++i) {
    for (int j = 0; j < v.dims[b]; ++j) {
      p[a] = i;
      p[b] = j;
      if (mask[v.voxel_index(p[0], p[1], p[2])]) return true;
    }
  }
  return false;
}

}  // namespace

VolumeFsim fsim_volume_median(const Volume& ref, const Volume& test, const Mask& mask_in) {
  if (ref.dims != test.dims) throw InputError("fsim_volume_median: volume shapes differ");
  const int channels = ref.channels();
  if (channels != 1 && channels != 3) throw InputError("fsim_volume_median: expects 1 or 3 channels");
  const Mask mask = mask_in.empty() ? Mask(ref.voxels(), 1) : mask_in;
  if (mask.size() != ref.voxels()) throw InputError("mask size does not match volume grid");

  double offset = 0.0;
  double scale = 255.0;
  if (channels == 1) {
    std::vector<double> values;
    for (std::size_t v = 0; v < ref.voxels(); ++v) {
      if (mask[v]) values.push_back(ref.at(v));
    }
    if (values.empty()) throw InputError("fsim_volume_median: empty mask");
    double lo = percentile(values, 0.01);
    double hi = percentile(values, 0.99);
    if (!(hi > lo)) {
      lo = *std::min_element(values.begin(), values.end());
      hi = *std::max_element(values.begin(), values.end());
    }
    offset = lo;
    scale = hi > lo ? 255.0 / (hi - lo) : 1.0;
  }

  VolumeFsim out;
  std::vector<double> values;
  for (int axis = 0; axis < 3; ++axis) {
    for (int index = 0; index < ref.dims[axis]; ++index) {
      if (!slice_has_mask(ref, mask, axis, index)) {
        ++out.skipped;
        continue;
      }
      FsimScore score;
      if (channels == 1) {
        score = fsim(slice_of(ref, mask, axis, index, 0, offset, scale), slice_of(test, mask, axis, index, 0, offset, scale));
      } else {
        std::array<Image, 3> a, b;
        for (int c = 0; c < 3; ++c) {
          a[c] = slice_of(ref, mask, axis, index, c, 0.0, 255.0);
          b[c] = slice_of(test, mask, axis, index, c, 0.0, 255.0);
        }
        score = fsim_color(a, b);
      }
      if (score.flagged) {
        ++out.skipped;
        continue;
      }
      out.slices.push_back({axis, index, score.value});
      values.push_back(score.value);
    }
  }
  if (values.empty()) throw InputError("fsim_volume_median: no valid slices");
  out.median = median_of(values);
  return out;
}

}  // namespace hashodf
