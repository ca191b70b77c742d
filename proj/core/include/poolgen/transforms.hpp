#pragma once

#include <string>
#include <vector>

#include "poolgen/tensor.hpp"

namespace poolgen {

enum class TransformKind { Rotate, TranslateVertical, Scale };

const char* transform_kind_name(TransformKind k);

// amount: degrees (counterclockwise) / pixels (downward) / scale factor.
struct TransformSpec {
  TransformKind kind = TransformKind::Rotate;
  double amount = 0.0;
};

// Geometric transforms about the image center with bilinear interpolation;
// samples falling outside the source are zero. Translation is integer
// vertical shift; scaling resizes about the center and crops or zero-pads
// back to the original dims. Shapes are always preserved.
Tensor apply_transform(const Tensor& images, const TransformSpec& spec);

// rotation 0..40 deg step 5, vertical translation 0..8 px step 1,
// scale 0.6..1.4 step 0.1.
std::vector<TransformSpec> default_sweep_grid();

}  // namespace poolgen
