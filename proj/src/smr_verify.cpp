#include "smrmc/smr_verify.hpp"

#include <stdexcept>

#include "smrmc/stdlib_observers.hpp"

namespace smrmc {

void MgcConfig::validate() const {
    if (threads < 1 || calls < 0 || pool < 1 || addresses < pool)
        throw std::invalid_argument("MGC bounds: threads >= 1, calls >= 0, 1 <= pool <= addresses");
    if (integers.empty()) throw std::invalid_argument("MGC bounds: empty integer pool");
}

namespace {

Bounds mgc_bounds(const MgcConfig& cfg) {
    Bounds b;
    b.threads = cfg.threads;
    b.ops = cfg.calls;
    b.addresses = cfg.addresses;
    b.mode = ReuseMode::Full;
    b.data_max = 1;
    return b;
}

MachineOptions mgc_options(const MgcConfig& cfg) {
    MachineOptions mo;
    mo.mgc = true;
    mo.pool = cfg.pool;
    mo.mgc_ints = cfg.integers;
    return mo;
}

void require_smr(const Program& impl) {
    if (impl.role != Role::Smr) throw std::invalid_argument("program '" + impl.name + "' is not an SMR implementation");
}

}  // namespace

MostGeneralClient most_general_client(const Program& impl, const MgcConfig& cfg) {
    return {mgc_machine(impl, stdlib_observer("gc"), cfg)->mgc_calls()};
}

std::unique_ptr<Machine> mgc_machine(const Program& impl, const Observer& spec, const MgcConfig& cfg) {
    require_smr(impl);
    cfg.validate();
    return std::make_unique<Machine>(impl, spec, std::nullopt, mgc_bounds(cfg), mgc_options(cfg));
}

SmrVerdict verify_smr(const Program& impl, const Observer& spec, const MgcConfig& cfg, const ExploreOptions& eo) {
    auto mp = mgc_machine(impl, spec, cfg);
    const Machine& m = *mp;
    Exploration e = explore(m, eo);
    for (auto& a : e.via)
        if (a.kind == Action::Kind::Free) throw std::logic_error("environment free in an MGC exploration");
    SmrVerdict v;
    v.states = e.states;
    v.transitions = e.transitions;
    v.incomplete = e.incomplete;
    v.witnesses = std::move(e.witnesses);
    v.correct = v.witnesses.empty() && !v.incomplete;
    for (auto& w : v.witnesses)
        if (w.kind == "smr-violation" && !is_violation(spec, w.history, m.smr_runtime().universe()))
            v.witnesses_rechecked = false;
    return v;
}

}  // namespace smrmc
