#pragma once

#include "config.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "integrator.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "model.hpp"
#include "scenarios.hpp"
#include "state.hpp"
