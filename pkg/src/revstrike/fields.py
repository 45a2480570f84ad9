"""The closed set of response fields that can carry an injected value."""

from __future__ import annotations

from enum import Enum


class FieldId(str, Enum):
    """One injectable location in an HTTP response.

    Thirteen header/status positions plus the body.  The enumeration is
    closed: report analysis, statistics and correlation matrices are all
    keyed on exactly these 14 members.
    """

    STATUS_MESSAGE = "StatusMessage"
    SERVER = "Server"
    X_POWERED_BY = "XPoweredBy"
    LOCATION = "Location"
    SET_COOKIE = "SetCookie"
    X_CONTENT_TYPE_OPTIONS = "XContentTypeOptions"
    X_ASPNET_VERSION = "XAspNetVersion"
    X_ASPNET_MVC_VERSION = "XAspNetMvcVersion"
    X_VARNISH = "XVarnish"
    STRICT_TRANSPORT_SECURITY = "StrictTransportSecurity"
    CONTENT_SECURITY_POLICY = "ContentSecurityPolicy"
    X_XSS_PROTECTION = "XXssProtection"
    X_FRAME_OPTIONS = "XFrameOptions"
    BODY = "Body"

    def __str__(self) -> str:  # ndjson records store the plain value
        return self.value


# Wire header name for each header-backed field.  STATUS_MESSAGE is the
# reason phrase of the status line and BODY is the message body; neither
# has a header name.
HEADER_NAMES: dict[FieldId, str] = {
    FieldId.SERVER: "Server",
    FieldId.X_POWERED_BY: "X-Powered-By",
    FieldId.LOCATION: "Location",
    FieldId.SET_COOKIE: "Set-Cookie",
    FieldId.X_CONTENT_TYPE_OPTIONS: "X-Content-Type-Options",
    FieldId.X_ASPNET_VERSION: "X-AspNet-Version",
    FieldId.X_ASPNET_MVC_VERSION: "X-AspNetMvc-Version",
    FieldId.X_VARNISH: "X-Varnish",
    FieldId.STRICT_TRANSPORT_SECURITY: "Strict-Transport-Security",
    FieldId.CONTENT_SECURITY_POLICY: "Content-Security-Policy",
    FieldId.X_XSS_PROTECTION: "X-XSS-Protection",
    FieldId.X_FRAME_OPTIONS: "X-Frame-Options",
}

ALL_FIELDS: tuple[FieldId, ...] = tuple(FieldId)
