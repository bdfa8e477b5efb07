#pragma once

#include <filesystem>
#include <string>

#include "contactsynth/contactsynth.hpp"

namespace cs_test {

inline std::filesystem::path data_dir() { return CONTACTSYNTH_DATA_DIR; }

inline contactsynth::HandModel hand(const std::string& name) {
  return contactsynth::load_hand(data_dir() / "hands" / (name + ".json"));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("contactsynth_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Configuration with joints drawn uniformly inside the limits and the base
/// perturbed around the origin.
inline contactsynth::JointConfig random_config(const contactsynth::HandModel& h, contactsynth::Rng& rng) {
  contactsynth::JointConfig q = h.rest_pose();
  for (int k = 0; k < 6; ++k) q.base_pose[k] = contactsynth::uniform(rng, -0.5, 0.5);
  const Eigen::VectorXd lo = h.lower_limits(), hi = h.upper_limits();
  for (Eigen::Index k = 0; k < q.joint_values.size(); ++k)
    q.joint_values[k] = contactsynth::uniform(rng, lo[6 + k], hi[6 + k]);
  return q;
}

}  // namespace cs_test
