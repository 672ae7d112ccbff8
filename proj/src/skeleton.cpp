#include "deocc/skeleton.hpp"

#include <algorithm>

namespace deocc {

std::size_t JointSet::valid_count() const {
    return static_cast<std::size_t>(std::count_if(joints.begin(), joints.end(), [](const Joint& j) { return j.valid; }));
}

namespace body25 {

std::string_view joint_name(int index) {
    static constexpr std::array<std::string_view, kJointCount> names{
        "Nose",  "Neck",  "RShoulder", "RElbow",  "RWrist",    "LShoulder", "LElbow",  "LWrist",    "MidHip",
        "RHip",  "RKnee", "RAnkle",    "LHip",    "LKnee",     "LAnkle",    "REye",    "LEye",      "REar",
        "LEar",  "LBigToe", "LSmallToe", "LHeel", "RBigToe",   "RSmallToe", "RHeel"};
    return names.at(static_cast<std::size_t>(index));
}

int mirror_joint(int index) {
    static constexpr std::array<int, kJointCount> mirror{0,  1,  5,  6,  7,  2,  3,  4,  8,  12, 13, 14, 9,
                                                         10, 11, 16, 15, 18, 17, 22, 23, 24, 19, 20, 21};
    return mirror.at(static_cast<std::size_t>(index));
}

}  // namespace body25

bool SkeletonTopology::is_foot(int index) const {
    return std::find(foot_indices.begin(), foot_indices.end(), index) != foot_indices.end();
}

const SkeletonTopology& SkeletonTopology::standard() {
    static const SkeletonTopology topo{};
    return topo;
}

}  // namespace deocc
