#pragma once

#include <memory>
#include <string>
#include <vector>

#include "smrmc/analysis.hpp"

namespace smrmc {

struct MgcConfig {
    int threads = 2;
    int calls = 3;      // API calls per thread
    int pool = 2;       // client addresses passed as pointer arguments
    int addresses = 4;  // pool plus addresses for the implementation's own records
    std::vector<Value> integers{0, 1};
    void validate() const;  // throws std::invalid_argument
};

// The client: every thread performs up to `calls` calls, each an API function
// of the implementation with arguments drawn from the pools.
struct MostGeneralClient {
    std::vector<std::string> calls;
};

MostGeneralClient most_general_client(const Program& impl, const MgcConfig& cfg);

// The machine verify_smr explores, e.g. for replaying its witnesses.
std::unique_ptr<Machine> mgc_machine(const Program& impl, const Observer& spec, const MgcConfig& cfg);

struct SmrVerdict {
    bool correct = false;     // no violation and exploration complete
    bool incomplete = false;  // state cap reached: correct up to the bound at best
    size_t states = 0, transitions = 0;
    std::vector<Witness> witnesses;
    // every smr-violation witness history is accepted by the specification
    // when checked from scratch on its raw event sequence
    bool witnesses_rechecked = true;
};

// Explores the implementation under the most general client with full reuse.
// Frees are performed by the implementation only.
SmrVerdict verify_smr(const Program& impl, const Observer& spec, const MgcConfig& cfg, const ExploreOptions& eo = {});

}  // namespace smrmc
