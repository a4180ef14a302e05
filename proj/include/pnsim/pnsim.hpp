#pragma once

#include "analysis.hpp"
#include "config.hpp"
#include "emitter.hpp"
#include "errors.hpp"
#include "fock.hpp"
#include "interference.hpp"
#include "mzi.hpp"

namespace pnsim {

#ifdef PNSIM_VERSION
inline constexpr const char* kVersion = PNSIM_VERSION;
#else
inline constexpr const char* kVersion = "0.0.0";
#endif

}  // namespace pnsim
