#pragma once

#include "paybandit/config.hpp"
#include "paybandit/env.hpp"
#include "paybandit/errors.hpp"
#include "paybandit/experiment.hpp"
#include "paybandit/ground_truth.hpp"
#include "paybandit/metrics.hpp"
#include "paybandit/pacing.hpp"
#include "paybandit/pending.hpp"
#include "paybandit/policy.hpp"
#include "paybandit/replay.hpp"
#include "paybandit/report.hpp"
#include "paybandit/rng.hpp"
#include "paybandit/service.hpp"
#include "paybandit/stats.hpp"
#include "paybandit/token_bucket.hpp"
#include "paybandit/trace.hpp"
#include "paybandit/tuner.hpp"
#include "paybandit/types.hpp"
#include "paybandit/util.hpp"
