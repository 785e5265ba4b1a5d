#pragma once

#include <v2x/assignment.hpp>
#include <v2x/channel.hpp>
#include <v2x/config.hpp>
#include <v2x/csv.hpp>
#include <v2x/drl.hpp>
#include <v2x/env.hpp>
#include <v2x/errors.hpp>
#include <v2x/gradcheck.hpp>
#include <v2x/grid.hpp>
#include <v2x/grouping.hpp>
#include <v2x/harness.hpp>
#include <v2x/neural.hpp>
#include <v2x/oracle.hpp>
#include <v2x/policies.hpp>
#include <v2x/rng.hpp>
#include <v2x/traffic.hpp>
