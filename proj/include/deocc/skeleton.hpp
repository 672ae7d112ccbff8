#pragma once

#include <array>
#include <string_view>
#include <utility>
#include <vector>

namespace deocc {

struct Joint {
    double x = 0.0;
    double y = 0.0;
    bool valid = true;

    bool operator==(const Joint&) const = default;
};

// K joints in pixel coordinates; pixel (x, y) has its centre at integer (x, y).
struct JointSet {
    std::vector<Joint> joints;

    std::size_t size() const { return joints.size(); }
    std::size_t valid_count() const;
    bool operator==(const JointSet&) const = default;
};

// OpenPose BODY_25 ordering.
namespace body25 {
inline constexpr int kNose = 0, kNeck = 1, kRShoulder = 2, kRElbow = 3, kRWrist = 4, kLShoulder = 5, kLElbow = 6,
                     kLWrist = 7, kMidHip = 8, kRHip = 9, kRKnee = 10, kRAnkle = 11, kLHip = 12, kLKnee = 13,
                     kLAnkle = 14, kREye = 15, kLEye = 16, kREar = 17, kLEar = 18, kLBigToe = 19, kLSmallToe = 20,
                     kLHeel = 21, kRBigToe = 22, kRSmallToe = 23, kRHeel = 24;
inline constexpr int kJointCount = 25;

std::string_view joint_name(int index);
// Left/right counterpart of a joint (identity for centre-line joints).
int mirror_joint(int index);
}  // namespace body25

// Versioned skeleton table: 25 joints, 6 foot joints, 14 interpolation pairs.
// Pair indices refer to the BODY_25 ids, which coincide with positions in the
// 19-joint body set because the foot joints are the trailing six.
struct SkeletonTopology {
    static constexpr int kVersion = 1;
    int joint_count = body25::kJointCount;
    std::array<int, 6> foot_indices{body25::kLBigToe, body25::kLSmallToe, body25::kLHeel,
                                    body25::kRBigToe, body25::kRSmallToe, body25::kRHeel};
    std::vector<std::pair<int, int>> pairs{{0, 1}, {1, 2}, {2, 3},  {3, 4},  {1, 5},   {5, 6},   {6, 7},
                                           {1, 8}, {8, 9}, {9, 10}, {10, 11}, {8, 12}, {12, 13}, {13, 14}};

    bool is_foot(int index) const;
    static const SkeletonTopology& standard();
};

}  // namespace deocc
