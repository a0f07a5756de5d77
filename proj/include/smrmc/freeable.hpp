#pragma once

#include <string>
#include <vector>

#include "smrmc/observer.hpp"
#include "smrmc/runtime.hpp"

namespace smrmc {

// h' ∈ F(h, a): h.h' is accepted by no run and h' frees at most a.
bool freeable_contains(const Observer& o, const History& h, Value a, const History& cont, const Universe& u);

// F(h1, a1) ⊆ F(h2, a2), with a continuation witnessing a failure.
ObserverRuntime::Inclusion freeable_inclusion(const Observer& o, const History& h1, Value a1, const History& h2,
                                              Value a2, const Universe& u);

struct ElisionWitness {
    History h1, h2;
    Value a = 0, b = 0, c = 0;
    History continuation;
};

struct ElisionProperty {
    std::string name;
    bool holds = true;
    std::vector<ElisionWitness> witnesses;  // at most a few
    size_t checks = 0;
};

struct ElisionReport {
    std::string observer;
    int bound = 0;
    size_t histories = 0;  // distinct (configuration, address status) nodes
    ElisionProperty replace, fresh, free;
    bool ok() const { return replace.holds && fresh.holds && free.holds; }
};

// Checks the three elision properties on all histories up to the bound:
//   replace: F(h, c) = F(h[a/b], c) for a != c != b
//   fresh:   F(h1, a) ⊆ F(h2, a) and b fresh in h2 (fresh or last freed in h1)
//            imply F(h1, b) ⊆ F(h2, b)
//   free:    F(h.free(a), b) = F(h, b) for a != b whenever h.free(a) ∈ S
ElisionReport check_elision_support(const Observer& o, const Universe& u, int bound);

Universe default_elision_universe(const Observer& o);

}  // namespace smrmc
