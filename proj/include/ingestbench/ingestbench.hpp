#pragma once

#include "ingestbench/batch.hpp"
#include "ingestbench/bench.hpp"
#include "ingestbench/cluster.hpp"
#include "ingestbench/core.hpp"
#include "ingestbench/graphite_net.hpp"
#include "ingestbench/log.hpp"
#include "ingestbench/metrics.hpp"
#include "ingestbench/producer.hpp"
#include "ingestbench/sender.hpp"
#include "ingestbench/sim.hpp"
#include "ingestbench/source.hpp"
