#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smrmc/observer.hpp"
#include "smrmc/program.hpp"
#include "smrmc/runtime.hpp"

namespace smrmc {

// Cell contents.  Pointer cells hold kBot (undefined), kSeg (uninitialised),
// kNull or an address 1..A; data cells hold 0..max or kEmpty; set cells hold
// a bit mask over addresses (bit 0 is NULL).
using Cell = int16_t;
constexpr Cell kBot = -2;
constexpr Cell kSeg = -1;
constexpr Cell kNull = 0;
constexpr Cell kEmpty = 127;
constexpr int kMaxAddresses = 15;

// Which freed addresses malloc may hand out again.
enum class ReuseMode : uint8_t { Full, One, None };
const char* mode_name(ReuseMode m);
std::optional<ReuseMode> parse_mode(const std::string& s);

struct Bounds {
    int threads = 2;
    int ops = 2;  // operations (or MGC calls) per thread
    int addresses = 5;
    ReuseMode mode = ReuseMode::Full;
    int data_max = -1;     // data domain 0..data_max; negative: max(3, threads * ops)
    Value reusable = 1;    // the reusable address of ReuseMode::One
    int dom_max() const { return data_max >= 0 ? data_max : std::max(3, threads * ops); }
};

struct Action {
    enum class Kind : uint8_t { Start, Step, Free, Init };
    Kind kind = Kind::Step;
    int thread = -1;  // -1 for environment frees and Init
    int choice = 0;   // Start: entry, Step: alternative, Free: address, Init: initial state
    bool operator==(const Action&) const = default;
    auto operator<=>(const Action&) const = default;
};

enum class Fault : uint8_t {
    None,
    UnsafeAccess,
    Segfault,
    RacyCall,
    DoubleRetire,
    AssertionFailure,
    NotLinearizable,
    SmrViolation,
    Exhausted,
};
const char* fault_name(Fault f);
std::optional<Fault> parse_fault(const std::string& s);

// Packed program state; see Machine for accessors.
using State = std::u16string;

struct Step {
    Action action;
    State next;
    Fault fault = Fault::None;
    std::string detail;
    std::string op;  // operation of the acting thread
    int line = 0;
    int pc = -1;     // instruction executed (after entering an atomic block)
    bool aba_prone = false;
    // enter with an invalid pointer argument: verdicts of both race checks
    int racy_exact = -1, racy_fast = -1;
    std::vector<Event> events;
};

struct MachineOptions {
    bool fast_race_check = false;  // verdict from "retire with an invalid pointer"
    bool exact_race_check = true;  // also compute the exact check for comparison
    bool mgc = false;              // drive an SMR implementation by the most general client
    int pool = 2;                  // client-owned addresses of the MGC
    std::vector<Value> mgc_ints{0, 1};
    bool dglm_hint = false;        // drop states where Head is more than one node ahead of Tail
};

// Valid part of a memory: entries "name = value" sorted by name.
struct ValidMemory {
    std::vector<std::pair<std::string, Cell>> cells;
    bool operator==(const ValidMemory&) const = default;
};

// Compiled program together with its SMR and linearizability observers.  A
// machine is immutable after construction apart from the interning caches of
// its observer runtimes, so it may be shared by exploration workers.
class Machine {
public:
    Machine(const Program& p, const Observer& smr, std::optional<Observer> lin, Bounds b, MachineOptions o = {});
    ~Machine();
    Machine(const Machine&) = delete;
    Machine& operator=(const Machine&) = delete;

    const Bounds& bounds() const;
    const MachineOptions& options() const;
    const Program& program() const;
    ObserverRuntime& smr_runtime() const;
    ObserverRuntime* lin_runtime() const;

    // Runs the init block; throws std::runtime_error if it blocks or faults.
    // Allocations branch over the address only (data is zero), so there are
    // several initial states when a reusable address is distinguished.
    std::vector<State> initial_states() const;
    State initial() const;  // the first of initial_states()
    std::vector<Step> successors(const State& s) const;
    // steps of thread t only: no other thread, no environment frees
    std::vector<Step> thread_successors(const State& s, int t) const;
    // Init actions are not applicable to states; see initial_states().
    std::optional<Step> apply(const State& s, const Action& a) const;
    // false if the state is excluded by a precision hint
    bool admissible(const State& s) const;

    // calls offered by the most general client, e.g. "protect(a1, 0)"
    std::vector<std::string> mgc_calls() const;

    int pc(const State& s, int t) const;  // -1 when idle
    int op(const State& s, int t) const;
    int ops_done(const State& s, int t) const;
    std::string op_name(int op) const;
    int op_statements(int op) const;
    ConfigId smr_config(const State& s) const;
    ConfigId lin_config(const State& s) const;
    uint32_t fresh(const State& s) const;
    uint32_t freed(const State& s) const;
    uint32_t pending(const State& s) const;

    std::string control_key(const State& s) const;
    ValidMemory restrict_valid(const State& s) const;
    // addresses occurring in the restriction (its domain and range)
    std::vector<Value> restriction_addresses(const State& s) const;
    // addresses held by valid pointer expressions
    std::vector<Value> valid_image(const State& s) const;
    std::vector<Cell> pointer_variables(const State& s) const;
    std::vector<int> pointer_selectors() const;
    Cell selector(const State& s, Value a, int sel) const;

    bool similar(const State& a, const State& b) const;
    bool mem_equiv(const State& a, const State& b, Value adr) const;
    bool behavior_included(const State& a, const State& b) const;

    // (control, restriction) up to a renaming of addresses.  labels[a] is the
    // position address a got in the canonical order, -1 if it does not occur.
    std::string similarity_key(const State& s, std::vector<int>* labels = nullptr) const;
    // as above with one address distinguished, so equal keys admit a renaming
    // that maps the marked addresses onto each other
    std::string marked_key(const State& s, Value mark, std::vector<int>* labels = nullptr) const;

    // names of violated state invariants
    std::vector<std::string> check_invariants(const State& s) const;

    std::string describe(const State& s) const;
    std::string describe(const Action& a, const State& before) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace smrmc
