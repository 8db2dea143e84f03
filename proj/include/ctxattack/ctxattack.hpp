#pragma once

#include "ctxattack/annotations.hpp"
#include "ctxattack/benchmark.hpp"
#include "ctxattack/blackbox.hpp"
#include "ctxattack/context.hpp"
#include "ctxattack/detector.hpp"
#include "ctxattack/error.hpp"
#include "ctxattack/orchestrator.hpp"
#include "ctxattack/perturb.hpp"
#include "ctxattack/planner.hpp"
#include "ctxattack/rng.hpp"
#include "ctxattack/synthetic_world.hpp"
