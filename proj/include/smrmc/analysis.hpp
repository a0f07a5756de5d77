#pragma once

#include <set>
#include <string>
#include <vector>

#include "smrmc/semantics.hpp"

namespace smrmc {

// Violation automaton over linearization events for a sequential stack
// (push/pop/pop_empty) or queue (enqueue/dequeue/dequeue_empty).
Observer spec_observer(const std::string& kind);

struct Witness {
    std::string kind;  // fault name, "harmful-aba" or "invariant:<name>"
    std::string detail;
    std::string op;
    int line = 0;
    std::vector<Action> trace;  // from the initial state; the last action exhibits the violation
    History history;            // SMR events induced along the trace
    bool operator==(const Witness&) const = default;
};

struct ExploreOptions {
    int workers = 1;
    size_t max_states = 0;  // 0: unbounded
    bool check_invariants = true;
};

struct Exploration {
    size_t states = 0, transitions = 0;
    size_t aba_prone = 0;       // ABA-prone transitions
    size_t enter_checks = 0;    // enter transitions checked by both race checks
    size_t racy_disagree = 0;   // ... on which the two checks differ
    size_t invariant_violations = 0;
    size_t stuck = 0;           // states without successors and unfinished threads
    size_t exhausted = 0;       // allocations without an available address
    bool incomplete = false;
    std::string incomplete_reason;
    size_t frontier = 0;
    std::vector<Witness> witnesses;  // one per (kind, operation, line), in discovery order

    // reachability graph
    std::vector<State> store;
    std::vector<uint32_t> parent;  // parent of store[i]; root points to itself
    std::vector<Action> via;       // action leading to store[i]
    struct AbaSite {
        uint32_t state = 0;
        Action action;
        int pc = -1;
        std::string op;
        int line = 0;
    };
    std::vector<AbaSite> aba_sites;

    std::vector<Action> trace_to(uint32_t state) const;
    bool violation() const { return !witnesses.empty(); }
};

Exploration explore(const Machine& m, const ExploreOptions& o = {});

// Re-executes a trace from the initial state.  Returns the last step, or
// nothing if some action is not enabled.
std::optional<Step> replay(const Machine& m, const std::vector<Action>& trace, History* history = nullptr);

// Replays the witness trace and confirms that its last step exhibits the
// reported fault, ABA or invariant violation with the recorded history.
bool confirm_witness(const Machine& m, const Witness& w, std::string* why = nullptr);

std::set<std::string> control_states(const Machine& m, const Exploration& e);

struct AbaReport {
    size_t sites = 0;         // ABA-prone transitions examined
    size_t candidates = 0;    // similar states on which the transition is disabled
    size_t replays = 0;       // candidates covered by a sequential replay
    size_t trivial = 0;       // candidates excluded by the reuse frame
    std::vector<Witness> harmful;
};

// Requires an exploration under ReuseMode::One.  replay_factor scales the
// operation length to bound the sequential replay.
AbaReport check_harmful_aba(const Machine& m, const Exploration& e, int replay_factor = 2);

struct SemanticsComparison {
    size_t full = 0, one = 0;       // distinct (control, valid memory) classes
    size_t only_full = 0, only_one = 0;
    std::string example;            // a class reachable under one semantics only
    bool incomplete = false;
    bool equal() const { return only_full == 0 && only_one == 0 && !incomplete; }
};

// Compares the (control, valid memory) classes, up to renaming of addresses,
// reachable with full reuse and with a single reusable address.
SemanticsComparison compare_semantics(const Program& p, const Observer& smr, std::optional<Observer> lin, Bounds b,
                                      MachineOptions mo = {}, ExploreOptions eo = {});

}  // namespace smrmc
