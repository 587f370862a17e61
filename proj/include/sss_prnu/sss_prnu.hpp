#pragma once

#include "sss_prnu/error.hpp"
#include "sss_prnu/field.hpp"
#include "sss_prnu/random.hpp"
#include "sss_prnu/fixed_point.hpp"
#include "sss_prnu/secret_sharing.hpp"
#include "sss_prnu/prnu.hpp"
#include "sss_prnu/image_io.hpp"
#include "sss_prnu/secure_correlation.hpp"
#include "sss_prnu/wire.hpp"
#include "sss_prnu/server.hpp"
#include "sss_prnu/transport.hpp"
#include "sss_prnu/tcp.hpp"
#include "sss_prnu/protocol.hpp"
