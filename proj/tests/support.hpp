#pragma once

#include <filesystem>
#include <string>

#include "qsspf/casefile.hpp"
#include "qsspf/network.hpp"

namespace testsupport {

inline std::filesystem::path case_path(const std::string& name) {
  return std::filesystem::path(QSSPF_DATA_DIR) / "cases" / (name + ".m");
}

inline qsspf::NetworkCase load(const std::string& name) {
  return qsspf::read_case_file(case_path(name));
}

inline const char* const kBundledCases[] = {"case2", "case9", "case14", "case30", "case57",
                                            "case118"};

}  // namespace testsupport
