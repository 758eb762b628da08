#pragma once

#include "hybridnet/agents.hpp"
#include "hybridnet/analysis.hpp"
#include "hybridnet/baselines.hpp"
#include "hybridnet/config.hpp"
#include "hybridnet/engine.hpp"
#include "hybridnet/error.hpp"
#include "hybridnet/llm.hpp"
#include "hybridnet/metrics.hpp"
#include "hybridnet/plot.hpp"
#include "hybridnet/random.hpp"
#include "hybridnet/runner.hpp"
#include "hybridnet/service.hpp"
#include "hybridnet/stance.hpp"
#include "hybridnet/statements.hpp"
#include "hybridnet/text.hpp"
#include "hybridnet/topology.hpp"
#include "hybridnet/transcript.hpp"
