#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "smrmc/analysis.hpp"
#include "smrmc/freeable.hpp"
#include "smrmc/report.hpp"
#include "smrmc/smr_verify.hpp"
#include "smrmc/stdlib_observers.hpp"

using namespace smrmc;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kViolation = 1, kIncomplete = 2, kUsage = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string corpus_dir() {
    if (const char* d = std::getenv("SMRMC_CORPUS")) return d;
    return SMRMC_CORPUS_DIR;
}

// A program given by a bare name is looked up in the shipped corpus.
std::string resolve_program(const std::string& path) {
    if (fs::exists(path)) return fs::absolute(path).lexically_normal().string();
    std::string alt = corpus_dir() + "/programs/" + path;
    if (fs::exists(alt)) return alt;
    throw UsageError("no such program: " + path);
}

std::string observer_dir(const std::string& dir) { return dir.empty() ? corpus_dir() + "/observers" : dir; }

Observer load_smr(const std::string& name, const std::string& dir) {
    try {
        return smr_observer(name, observer_dir(dir));
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

std::string default_tags(const std::string& smr) {
    if (smr == "gc") return "G";
    if (smr == "none") return "N";
    if (smr == "hp") return "H";
    if (smr == "ebr") return "E";
    return "";
}

Program load_checked(const std::string& path, const std::string& tags) {
    Program p;
    try {
        p = load_program(path);
    } catch (const std::exception& e) {
        throw UsageError(path + ": " + e.what());
    }
    auto diags = validate_program(p, tags);
    if (!diags.empty()) {
        std::ostringstream os;
        for (auto& d : diags) os << path << ":" << d.line << ": " << d.message << "\n";
        throw UsageError(os.str());
    }
    return select_variant(p, tags);
}

void print_trace(const Machine& m, const Witness& w, std::ostream& os) {
    State s = m.initial();
    for (auto& a : w.trace) {
        if (a.kind == Action::Kind::Init) {
            s = m.initial_states().at(a.choice);
            os << "    " << m.describe(a, s) << "\n";
            continue;
        }
        os << "    " << m.describe(a, s) << "\n";
        auto st = m.apply(s, a);
        if (!st) {
            os << "    (not enabled)\n";
            return;
        }
        s = std::move(st->next);
    }
}

void print_witnesses(const Machine& m, const std::vector<Witness>& ws, std::ostream& os) {
    for (auto& w : ws) {
        os << w.kind;
        if (!w.op.empty()) os << " in " << w.op << ":" << w.line;
        os << ": " << w.detail << "\n";
        print_trace(m, w, os);
        os << "  history: " << to_string(w.history) << "\n";
    }
}

void write_report(const Report& r, const std::string& path) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write " + path);
    out << print_report(r);
}

int verdict_code(const std::string& v) {
    if (v == "violation" || v == "fails" || v == "different") return kViolation;
    if (v == "incomplete") return kIncomplete;
    return kOk;
}

struct DsArgs {
    std::string program, smr = "hp", spec = "stack", mode = "one", tags, observers, json;
    int threads = 2, ops = 2, addresses = 5, data_max = -1, workers = 1, replay_factor = 2;
    size_t max_states = 0;
    bool fast_race = false, dglm_hint = false, no_tags = false;
};

Bounds ds_bounds(const DsArgs& a) {
    if (a.threads < 1 || a.ops < 1 || a.addresses < 1 || a.addresses > 15)
        throw UsageError("bounds: threads, ops >= 1 and 1 <= addresses <= 15");
    Bounds b;
    b.threads = a.threads;
    b.ops = a.ops;
    b.addresses = a.addresses;
    b.data_max = a.data_max;
    auto mode = parse_mode(a.mode);
    if (!mode) throw UsageError("unknown mode '" + a.mode + "'");
    b.mode = *mode;
    return b;
}

std::optional<Observer> ds_spec(const std::string& spec) {
    if (spec == "none") return std::nullopt;
    if (spec != "stack" && spec != "queue") throw UsageError("unknown spec '" + spec + "'");
    return spec_observer(spec);
}

std::string ds_tags(const DsArgs& a) { return a.no_tags ? "" : !a.tags.empty() ? a.tags : default_tags(a.smr); }

Report ds_report_head(const DsArgs& a, const std::string& command, const std::string& path) {
    Report r;
    r.command = command;
    r.inputs["program"] = path;
    r.digests["program"] = sha256_file(path);
    r.options = {{"smr", a.smr}, {"spec", a.spec}, {"mode", a.mode}, {"tags", ds_tags(a)},
                 {"observers", a.observers}, {"fast_race_check", a.fast_race ? "1" : "0"},
                 {"dglm_hint", a.dglm_hint ? "1" : "0"}};
    r.bounds = {{"threads", a.threads}, {"ops", a.ops}, {"addresses", a.addresses}, {"data_max", a.data_max},
                {"replay_factor", a.replay_factor}, {"max_states", static_cast<int64_t>(a.max_states)}};
    return r;
}

struct DsRun {
    std::unique_ptr<Machine> machine;
    Report report;
};

DsRun run_verify_ds(const DsArgs& a) {
    auto path = resolve_program(a.program);
    Bounds b = ds_bounds(a);
    Program p = load_checked(path, ds_tags(a));
    MachineOptions mo;
    mo.fast_race_check = a.fast_race;
    mo.dglm_hint = a.dglm_hint;
    DsRun run;
    run.report = ds_report_head(a, "verify-ds", path);
    Report& r = run.report;
    auto t0 = std::chrono::steady_clock::now();
    run.machine = std::make_unique<Machine>(p, load_smr(a.smr, a.observers), ds_spec(a.spec), b, mo);
    const Machine& m = *run.machine;
    Exploration e = explore(m, {a.workers, a.max_states, true});
    r.timings["explore"] = seconds_since(t0);
    r.counters = {{"states", e.states},
                  {"transitions", e.transitions},
                  {"aba_prone", e.aba_prone},
                  {"enter_checks", e.enter_checks},
                  {"racy_disagree", e.racy_disagree},
                  {"invariant_violations", e.invariant_violations},
                  {"stuck", e.stuck},
                  {"exhausted", e.exhausted}};
    r.witnesses = e.witnesses;
    if (b.mode == ReuseMode::One && !e.incomplete) {
        auto t1 = std::chrono::steady_clock::now();
        AbaReport ab = check_harmful_aba(m, e, a.replay_factor);
        r.timings["harmful_aba"] = seconds_since(t1);
        r.counters["aba_sites"] = ab.sites;
        r.counters["aba_candidates"] = ab.candidates;
        r.counters["aba_replays"] = ab.replays;
        r.counters["aba_trivial"] = ab.trivial;
        r.counters["harmful_aba"] = ab.harmful.size();
        r.witnesses.insert(r.witnesses.end(), ab.harmful.begin(), ab.harmful.end());
    }
    r.verdict = !r.witnesses.empty() ? "violation" : e.incomplete ? "incomplete" : "verified";
    if (e.incomplete) r.options["incomplete_reason"] = e.incomplete_reason;
    r.timings["total"] = seconds_since(t0);
    return run;
}

struct SmrArgs {
    std::string program, observer = "hp", observers, json;
    int threads = 2, calls = 3, pool = 2, addresses = 4, workers = 1;
    size_t max_states = 0;
};

struct SmrRun {
    std::unique_ptr<Machine> machine;
    Report report;
};

MgcConfig mgc_config(const SmrArgs& a) {
    MgcConfig cfg;
    cfg.threads = a.threads;
    cfg.calls = a.calls;
    cfg.pool = a.pool;
    cfg.addresses = a.addresses;
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

SmrRun run_verify_smr(const SmrArgs& a) {
    auto path = resolve_program(a.program);
    Program p = load_checked(path, "");
    if (p.role != Role::Smr) throw UsageError(path + ": not an SMR implementation (role smr)");
    MgcConfig cfg = mgc_config(a);
    Observer o = load_smr(a.observer, a.observers);
    SmrRun run;
    Report& r = run.report;
    r.command = "verify-smr";
    r.inputs["program"] = path;
    r.digests["program"] = sha256_file(path);
    r.options = {{"observer", a.observer}, {"observers", a.observers}, {"mode", "full"}};
    r.bounds = {{"threads", a.threads}, {"calls", a.calls}, {"pool", a.pool}, {"addresses", a.addresses},
                {"max_states", static_cast<int64_t>(a.max_states)}};
    auto t0 = std::chrono::steady_clock::now();
    SmrVerdict v = verify_smr(p, o, cfg, {a.workers, a.max_states, true});
    r.timings["total"] = seconds_since(t0);
    r.counters = {{"states", v.states}, {"transitions", v.transitions},
                  {"witnesses_rechecked", v.witnesses_rechecked ? 1 : 0}};
    r.witnesses = v.witnesses;
    r.verdict = !v.witnesses.empty() ? "violation" : v.incomplete ? "incomplete" : "correct";
    run.machine = mgc_machine(p, o, cfg);
    return run;
}

void print_summary(const Report& r, std::ostream& os) {
    os << r.command << ": " << r.verdict;
    for (auto& [k, v] : r.counters) os << " " << k << "=" << v;
    if (r.timings.count("total")) os << " time=" << r.timings.at("total") << "s";
    os << "\n";
}

int cmd_verify_ds(const DsArgs& a) {
    auto run = run_verify_ds(a);
    print_summary(run.report, std::cout);
    if (run.report.options.count("incomplete_reason"))
        std::cout << "incomplete: " << run.report.options.at("incomplete_reason") << "\n";
    print_witnesses(*run.machine, run.report.witnesses, std::cout);
    write_report(run.report, a.json);
    return verdict_code(run.report.verdict);
}

int cmd_verify_smr(const SmrArgs& a) {
    auto run = run_verify_smr(a);
    print_summary(run.report, std::cout);
    print_witnesses(*run.machine, run.report.witnesses, std::cout);
    write_report(run.report, a.json);
    return verdict_code(run.report.verdict);
}

struct ElisionArgs {
    std::string observer = "hp", observers, json;
    int bound = 5;
};

Report run_check_elision(const ElisionArgs& a) {
    if (a.bound < 0) throw UsageError("bound must be non-negative");
    Observer o = load_smr(a.observer, a.observers);
    Report r;
    r.command = "check-elision";
    r.options = {{"observer", a.observer}, {"observers", a.observers}};
    r.bounds = {{"bound", a.bound}};
    auto t0 = std::chrono::steady_clock::now();
    ElisionReport er = check_elision_support(o, default_elision_universe(o), a.bound);
    r.timings["total"] = seconds_since(t0);
    r.counters = {{"histories", er.histories}};
    for (auto* p : {&er.replace, &er.fresh, &er.free}) {
        r.counters[p->name + "_checks"] = p->checks;
        r.counters[p->name + "_holds"] = p->holds ? 1 : 0;
        for (auto& w : p->witnesses) {
            Witness x;
            x.kind = "elision:" + p->name;
            x.detail = "a=" + std::to_string(w.a) + " b=" + std::to_string(w.b) + " c=" + std::to_string(w.c) +
                       " h1=" + to_string(w.h1) + " h2=" + to_string(w.h2) +
                       " continuation=" + to_string(w.continuation);
            r.witnesses.push_back(std::move(x));
        }
    }
    r.verdict = er.ok() ? "holds" : "fails";
    return r;
}

int cmd_check_elision(const ElisionArgs& a) {
    Report r = run_check_elision(a);
    print_summary(r, std::cout);
    for (auto& w : r.witnesses) std::cout << w.kind << ": " << w.detail << "\n";
    write_report(r, a.json);
    return verdict_code(r.verdict);
}

Report run_compare(const DsArgs& a) {
    auto path = resolve_program(a.program);
    Bounds b = ds_bounds(a);
    Program p = load_checked(path, ds_tags(a));
    Observer smr = load_smr(a.smr, a.observers);
    auto lin = ds_spec(a.spec);
    MachineOptions mo;
    mo.dglm_hint = a.dglm_hint;
    ExploreOptions eo{a.workers, a.max_states, true};
    Report r = ds_report_head(a, "compare-semantics", path);
    r.options.erase("mode");
    auto t0 = std::chrono::steady_clock::now();
    SemanticsComparison c = compare_semantics(p, smr, lin, b, mo, eo);
    r.counters = {{"full", c.full}, {"one", c.one}, {"only_full", c.only_full}, {"only_one", c.only_one}};
    b.mode = ReuseMode::One;
    Machine m(p, smr, lin, b, mo);
    Exploration e = explore(m, eo);
    if (!e.incomplete) {
        AbaReport ab = check_harmful_aba(m, e, a.replay_factor);
        r.counters["harmful_aba"] = ab.harmful.size();
        r.witnesses = ab.harmful;
    }
    r.timings["total"] = seconds_since(t0);
    if (!c.example.empty()) r.options["example"] = c.example;
    r.verdict = c.incomplete || e.incomplete ? "incomplete" : c.equal() ? "equal" : "different";
    return r;
}

int cmd_compare(const DsArgs& a) {
    Report r = run_compare(a);
    print_summary(r, std::cout);
    if (r.options.count("example")) std::cout << r.options.at("example") << "\n";
    for (auto& w : r.witnesses) std::cout << w.kind << " in " << w.op << ":" << w.line << ": " << w.detail << "\n";
    write_report(r, a.json);
    return verdict_code(r.verdict);
}

int64_t bound_of(const Report& r, const std::string& k) {
    auto it = r.bounds.find(k);
    if (it == r.bounds.end()) throw UsageError("report lacks bound '" + k + "'");
    return it->second;
}

std::string option_of(const Report& r, const std::string& k) {
    auto it = r.options.find(k);
    return it == r.options.end() ? "" : it->second;
}

DsArgs ds_args_of(const Report& r, int workers) {
    DsArgs a;
    a.program = r.inputs.at("program");
    a.smr = option_of(r, "smr");
    a.spec = option_of(r, "spec");
    a.mode = r.command == "verify-ds" ? option_of(r, "mode") : "one";
    a.tags = option_of(r, "tags");
    a.no_tags = a.tags.empty();
    a.observers = option_of(r, "observers");
    a.fast_race = option_of(r, "fast_race_check") == "1";
    a.dglm_hint = option_of(r, "dglm_hint") == "1";
    a.threads = static_cast<int>(bound_of(r, "threads"));
    a.ops = static_cast<int>(bound_of(r, "ops"));
    a.addresses = static_cast<int>(bound_of(r, "addresses"));
    a.data_max = static_cast<int>(bound_of(r, "data_max"));
    a.replay_factor = static_cast<int>(bound_of(r, "replay_factor"));
    a.max_states = static_cast<size_t>(bound_of(r, "max_states"));
    a.workers = workers;
    return a;
}

SmrArgs smr_args_of(const Report& r, int workers) {
    SmrArgs a;
    a.program = r.inputs.at("program");
    a.observer = option_of(r, "observer");
    a.observers = option_of(r, "observers");
    a.threads = static_cast<int>(bound_of(r, "threads"));
    a.calls = static_cast<int>(bound_of(r, "calls"));
    a.pool = static_cast<int>(bound_of(r, "pool"));
    a.addresses = static_cast<int>(bound_of(r, "addresses"));
    a.max_states = static_cast<size_t>(bound_of(r, "max_states"));
    a.workers = workers;
    return a;
}

// Re-executes every witness of a report; reports without action traces are
// recomputed and their verdict compared.
int cmd_replay(const std::string& path, int workers) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    Report r;
    try {
        r = parse_report(ss.str());
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    for (auto& [role, file] : r.inputs)
        if (r.digests.count(role) && sha256_file(file) != r.digests.at(role)) {
            std::cout << "replay: " << file << " changed since the report was written\n";
            return kViolation;
        }
    std::unique_ptr<Machine> m;
    if (r.command == "verify-ds") {
        auto a = ds_args_of(r, workers);
        Bounds b = ds_bounds(a);
        MachineOptions mo;
        mo.fast_race_check = a.fast_race;
        mo.dglm_hint = a.dglm_hint;
        m = std::make_unique<Machine>(load_checked(a.program, ds_tags(a)), load_smr(a.smr, a.observers),
                                      ds_spec(a.spec), b, mo);
    } else if (r.command == "verify-smr") {
        auto a = smr_args_of(r, workers);
        m = mgc_machine(load_checked(a.program, ""), load_smr(a.observer, a.observers), mgc_config(a));
    } else if (r.command == "compare-semantics") {
        auto a = ds_args_of(r, workers);
        Bounds b = ds_bounds(a);
        MachineOptions mo;
        mo.dglm_hint = a.dglm_hint;
        m = std::make_unique<Machine>(load_checked(a.program, ds_tags(a)), load_smr(a.smr, a.observers),
                                      ds_spec(a.spec), b, mo);
    }
    bool traced = m && !r.witnesses.empty();
    if (traced) {
        int bad = 0;
        for (auto& w : r.witnesses) {
            std::string why;
            bool ok = confirm_witness(*m, w, &why);
            std::cout << (ok ? "confirmed " : "NOT confirmed ") << w.kind << " " << w.op << ":" << w.line
                      << (ok ? "" : " (" + why + ")") << "\n";
            bad += !ok;
        }
        std::cout << "replay: " << (bad ? "failed" : "ok") << "\n";
        return bad ? kViolation : kOk;
    }
    std::string again;
    if (r.command == "verify-ds") again = run_verify_ds(ds_args_of(r, workers)).report.verdict;
    else if (r.command == "verify-smr") again = run_verify_smr(smr_args_of(r, workers)).report.verdict;
    else if (r.command == "compare-semantics") again = run_compare(ds_args_of(r, workers)).verdict;
    else if (r.command == "check-elision") {
        ElisionArgs a;
        a.observer = option_of(r, "observer");
        a.observers = option_of(r, "observers");
        a.bound = static_cast<int>(bound_of(r, "bound"));
        again = run_check_elision(a).verdict;
    } else {
        throw UsageError("unknown command in report: " + r.command);
    }
    bool ok = again == r.verdict;
    std::cout << "replay: recomputed verdict " << again << (ok ? " matches" : " differs from " + r.verdict) << "\n";
    return ok ? kOk : kViolation;
}

void add_ds_options(CLI::App* c, DsArgs& a, bool with_mode) {
    c->add_option("--program", a.program, "program file or corpus name")->required();
    c->add_option("--smr", a.smr, "gc, none, hp, ebr, a '*' product, file:PATH or an observer name");
    c->add_option("--spec", a.spec, "stack, queue or none");
    c->add_option("--threads", a.threads);
    c->add_option("--ops", a.ops, "operations per thread");
    c->add_option("--addresses", a.addresses);
    c->add_option("--data-max", a.data_max, "data domain 0..N; default max(3, threads*ops)");
    if (with_mode) c->add_option("--mode", a.mode, "full, one or none");
    c->add_option("--tags", a.tags, "variant tags; default from --smr");
    c->add_flag("--all-tags", a.no_tags, "keep every tagged statement");
    c->add_option("--observer-dir", a.observers, "directory of .obs files");
    c->add_option("--max-states", a.max_states, "stop after this many states (0: unbounded)");
    c->add_option("--replay-factor", a.replay_factor, "sequential replay bound per operation statement");
    c->add_flag("--dglm-hint", a.dglm_hint, "drop states where Head is more than one node ahead of Tail");
    c->add_option("--json", a.json, "write a report");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Explicit-state verification of lock-free data structures with safe memory reclamation"};
    app.require_subcommand(1);
    int workers = 1;
    app.add_option("--workers", workers, "exploration threads")->envname("SMRMC_WORKERS");

    DsArgs ds;
    auto* vds = app.add_subcommand("verify-ds", "verify a data structure against an SMR and a specification");
    add_ds_options(vds, ds, true);
    vds->add_flag("--fast-race-check", ds.fast_race, "racy calls: retire with an invalid pointer only");
    vds->add_option("--workers", workers)->envname("SMRMC_WORKERS");

    SmrArgs sa;
    auto* vsmr = app.add_subcommand("verify-smr", "verify an SMR implementation under the most general client");
    vsmr->add_option("--program", sa.program)->required();
    vsmr->add_option("--observer", sa.observer, "hp, ebr, a '*' product, file:PATH or an observer name");
    vsmr->add_option("--observer-dir", sa.observers);
    vsmr->add_option("--threads", sa.threads);
    vsmr->add_option("--calls", sa.calls, "API calls per thread");
    vsmr->add_option("--pool", sa.pool, "client addresses");
    vsmr->add_option("--addresses", sa.addresses, "client and implementation addresses");
    vsmr->add_option("--max-states", sa.max_states);
    vsmr->add_option("--json", sa.json);
    vsmr->add_option("--workers", workers)->envname("SMRMC_WORKERS");

    ElisionArgs ea;
    auto* el = app.add_subcommand("check-elision", "check that an SMR observer supports elision of memory reuse");
    el->add_option("--observer", ea.observer);
    el->add_option("--observer-dir", ea.observers);
    el->add_option("--bound", ea.bound, "history length");
    el->add_option("--json", ea.json);

    DsArgs cs;
    cs.ops = 1;
    cs.spec = "none";
    auto* cmp = app.add_subcommand("compare-semantics", "compare reachable valid memories with full and single reuse");
    add_ds_options(cmp, cs, false);
    cmp->add_option("--workers", workers)->envname("SMRMC_WORKERS");

    std::string report;
    auto* rp = app.add_subcommand("replay", "re-execute the witnesses of a report");
    rp->add_option("--report", report)->required();
    rp->add_option("--workers", workers)->envname("SMRMC_WORKERS");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    ds.workers = sa.workers = cs.workers = workers;
    try {
        if (*vds) return cmd_verify_ds(ds);
        if (*vsmr) return cmd_verify_smr(sa);
        if (*el) return cmd_check_elision(ea);
        if (*cmp) return cmd_compare(cs);
        if (*rp) return cmd_replay(report, workers);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
