// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smie/data.hpp"

namespace smie {

/// Squared forward plus squared backward temporal displacement of every
/// coordinate. Displacements past either end of the sequence count as zero.
/// Output has the shape of `seq`.
SkeletonSequence bidirectional_motion(const SkeletonSequence& seq);

/// Mean motion of each frame over joints and channels.
std::vector<double> frame_motion(const SkeletonSequence& motion);

/// Normalizes frame motion into attention weights. A motionless sequence
/// gets uniform attention. Throws on negative input.
std::vector<double> attention_weights(std::span<const double> frame_motion);

/// Indices of the `count` largest weights in ascending index order; ties go
/// to the earlier frame.
std::vector<std::size_t> select_keyframes(std::span<const double> weights, std::size_t count);

/// Copy of `seq` with every value of the listed frames set to zero.
SkeletonSequence mask_keyframes(const SkeletonSequence& seq, std::span<const std::size_t> frames);

/// 15 for 50-frame sequences, otherwise round(0.3 * K).
std::size_t default_keyframe_count(std::size_t frames);

/// Attention of `seq` followed by masking of its top `count` frames.
SkeletonSequence attention_masked(const SkeletonSequence& seq, std::size_t count);

}  // namespace smie
