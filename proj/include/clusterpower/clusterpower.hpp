#pragma once

#include "clusterpower/catalog.hpp"
#include "clusterpower/error.hpp"
#include "clusterpower/gof.hpp"
#include "clusterpower/io.hpp"
#include "clusterpower/power.hpp"
#include "clusterpower/process.hpp"
#include "clusterpower/random.hpp"
#include "clusterpower/run_config.hpp"
#include "clusterpower/stats.hpp"
#include "clusterpower/version.hpp"
