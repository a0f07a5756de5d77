#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "smrmc/analysis.hpp"

namespace smrmc {

inline constexpr const char* kToolVersion = "0.1.0";

// Machine-readable result of one CLI command.  Witness traces can be fed back
// through `smrmc replay`.
struct Report {
    std::string tool = "smrmc";
    std::string version = kToolVersion;
    std::string command;
    std::map<std::string, std::string> inputs;   // role -> path
    std::map<std::string, std::string> digests;  // role -> sha256 of the file
    std::map<std::string, std::string> options;  // smr, spec, mode, tags, flags
    std::map<std::string, int64_t> bounds;
    std::string verdict;
    std::map<std::string, int64_t> counters;
    std::vector<Witness> witnesses;
    std::map<std::string, double> timings;  // seconds
    bool operator==(const Report&) const = default;
};

std::string print_report(const Report& r);
Report parse_report(const std::string& text);  // throws std::runtime_error

std::string sha256_file(const std::string& path);

}  // namespace smrmc
