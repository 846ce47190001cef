#pragma once

#include "esld/errors.hpp"
#include "esld/types.hpp"
#include "esld/feature_store.hpp"
#include "esld/probe.hpp"
#include "esld/metrics.hpp"
#include "esld/leakage_audit.hpp"
#include "esld/loso.hpp"
#include "esld/latency_report.hpp"
#include "esld/commands.hpp"
