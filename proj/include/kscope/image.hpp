#pragma once

#include <stdexcept>

#include "kscope/core.hpp"
#include "kscope/fft.hpp"

namespace kscope {

/// Centered h x w window. Odd margins drop the extra row/column from the
/// high-index side, i.e. the window starts at floor((H - h) / 2).
template <typename Scalar>
Plane<Scalar> center_crop(const Plane<Scalar>& img, Index h, Index w) {
    if (h < 1 || w < 1 || h > img.rows() || w > img.cols())
        throw std::invalid_argument("center_crop: requested size exceeds the source");
    const Index y0 = (img.rows() - h) / 2, x0 = (img.cols() - w) / 2;
    return img.block(y0, x0, h, w);
}

/// Adjoint of center_crop: embeds a cropped plane into zeros of the full size.
template <typename Scalar>
Plane<Scalar> center_pad(const Plane<Scalar>& img, Index h, Index w) {
    if (img.rows() > h || img.cols() > w) throw std::invalid_argument("center_pad: target smaller than source");
    Plane<Scalar> out = Plane<Scalar>::Zero(h, w);
    out.block((h - img.rows()) / 2, (w - img.cols()) / 2, img.rows(), img.cols()) = img;
    return out;
}

/// Image of one coil, idft2 of its k-space plane in double precision.
template <typename Real>
ComplexImage coil_image(const BasicKSpaceSlice<Real>& ks, Index c) {
    return idft2(ComplexImage(ks.coil(c).template cast<cdouble>()));
}

/// Root-sum-of-squares coil combination of the coil images.
template <typename Real>
RealImage rss_combine(const BasicKSpaceSlice<Real>& ks) {
    if (ks.num_coils() < 1) throw std::invalid_argument("rss_combine: slice has zero coils");
    RealImage acc = RealImage::Zero(ks.height(), ks.width());
    for (Index c = 0; c < ks.num_coils(); ++c) acc += coil_image(ks, c).abs2();
    return acc.sqrt();
}

inline RealImage rss_combine(const std::vector<ComplexImage>& coil_images) {
    if (coil_images.empty()) throw std::invalid_argument("rss_combine: zero coils");
    RealImage acc = RealImage::Zero(coil_images.front().rows(), coil_images.front().cols());
    for (const auto& im : coil_images) acc += im.abs2();
    return acc.sqrt();
}

}  // namespace kscope
