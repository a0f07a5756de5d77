#pragma once

#include <string>

#include "smrmc/observer.hpp"

namespace smrmc {

// base, hp, hp(k), ebr, gc, dta, frozen, ts-mark, ts-done
Observer stdlib_observer(const std::string& name);

// Observer for an SMR selector as used on the command line:
//   gc, none (= base), hp (= base*hp), ebr (= base*ebr), dta, ts,
//   a '*'-separated product of stdlib names, file:PATH, or a bare name that
//   is looked up as <search_dir>/<name>.obs
Observer smr_observer(const std::string& spec, const std::string& search_dir = "");

}  // namespace smrmc
