#pragma once

#include "causalcert/errors.hpp"
#include "causalcert/data.hpp"
#include "causalcert/csv.hpp"
#include "causalcert/losses.hpp"
#include "causalcert/measure.hpp"
#include "causalcert/learners.hpp"
#include "causalcert/weights.hpp"
#include "causalcert/metalearners.hpp"
#include "causalcert/certificate.hpp"
#include "causalcert/bounds.hpp"
#include "causalcert/dgp.hpp"
#include "causalcert/certify.hpp"
#include "causalcert/experiments.hpp"
