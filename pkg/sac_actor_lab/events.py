# -*- coding: utf-8 -*-

"""Structured event log setup: key-value or JSON lines, or a FluentD sink."""

import fluent.sender
import os
import structlog
import structlog.processors
import sys

from datetime import datetime, timezone
from urllib.parse import urlsplit

ENDPOINT_VARIABLE = 'SAC_ACTOR_LAB_LOGGING_ENDPOINT'
DEFAULT_ENDPOINT = 'file:///dev/stderr'
FLUENT_PORT = 24224


class TimeStamper(object):
    """Stamp events with an ISO 8601 ``@timestamp`` unless one is given.

    Unlike ``structlog.processors.TimeStamper``, an explicit ``@timestamp``
    (string or ``datetime``) passed by the caller is kept.
    """

    def __init__(self, key='@timestamp', utc=False):
        self._key = key
        if utc:
            self._now = lambda: datetime.now(timezone.utc)
        else:
            self._now = datetime.now

    def __call__(self, _, __, event_dict):
        timestamp = event_dict.get(self._key)
        if timestamp is None:
            timestamp = self._now()
        if isinstance(timestamp, datetime):
            timestamp = timestamp.isoformat()
        event_dict[self._key] = timestamp
        return event_dict


class FluentLoggerFactory(object):
    """``structlog.configure(logger_factory=...)`` target for FluentD."""

    @classmethod
    def from_url(cls, url):
        """Parse ``fluent://host[:port]/tag``."""
        parts = urlsplit(url)
        if parts.scheme != 'fluent' or parts.query or parts.fragment:
            raise ValueError('Invalid URL: "%s".' % url)
        host, _, port = parts.netloc.partition(':')
        try:
            port = int(port) if port else FLUENT_PORT
        except ValueError:
            raise ValueError('Invalid URL: "%s".' % url)
        return cls(parts.path[1:], host, port)

    def __init__(self, tag, host, port):
        self._tag = tag
        self._host = host
        self._port = port
        self._sender = fluent.sender.FluentSender(tag, host=host, port=port)

    @property
    def tag(self):
        return self._tag

    @property
    def host(self):
        return self._host

    @property
    def port(self):
        return self._port

    def __call__(self, *args):
        return FluentLogger(self._sender)


class FluentLogger(object):
    """Forwards each event and its fields as one FluentD record."""

    def __init__(self, sender):
        self._sender = sender

    def info(self, event, **fields):
        self._sender.emit(event, fields)


def resolve_endpoint(flag=None):
    """Flag, then ``SAC_ACTOR_LAB_LOGGING_ENDPOINT``, then stderr."""
    return flag or os.environ.get(ENDPOINT_VARIABLE) or DEFAULT_ENDPOINT


def configure_logging(log_format, utc, endpoint):
    """Route ``structlog`` events to ``endpoint``.

    ``file://`` endpoints (``/dev/stdout``, ``/dev/stderr`` or a path) print
    one line per event in ``kv`` or ``json`` format; ``fluent://`` endpoints
    ship records to FluentD and ignore ``log_format``.
    """
    processors = [TimeStamper(key='@timestamp', utc=utc)]
    if endpoint.startswith('file://'):
        path = endpoint[len('file://'):]
        if path == '/dev/stdout':
            stream = sys.stdout
        elif path == '/dev/stderr':
            stream = sys.stderr
        else:
            stream = open(path, 'a', encoding='utf-8')
        logger_factory = structlog.PrintLoggerFactory(file=stream)
        if log_format == 'kv':
            processors.append(structlog.processors.KeyValueRenderer(
                sort_keys=True,
                key_order=['@timestamp', 'event'],
            ))
        else:
            processors.append(structlog.processors.JSONRenderer(
                sort_keys=True,
            ))
    elif endpoint.startswith('fluent://'):
        logger_factory = FluentLoggerFactory.from_url(endpoint)
    else:
        raise ValueError('Invalid logging endpoint "%s".' % endpoint)
    structlog.configure(
        processors=processors,
        logger_factory=logger_factory,
    )
