"""Retrying JSON POST shared by the chat and embedding clients."""

import logging
import os
import time
from typing import Any, Callable, Dict, Optional, Tuple

import httpx
from pydantic import BaseModel, Field

from .errors import (
    AuthError,
    EndpointStatusError,
    EndpointTimeoutError,
    MalformedResponseError,
    NetworkError,
    TransportError,
)

logger = logging.getLogger(__name__)


class RetryPolicy(BaseModel):
    """Retry schedule for transient failures (transport errors, timeouts, 5xx)."""

    max_retries: int = Field(3, ge=0, description="Retries after the first attempt")
    backoff_base: float = Field(0.5, ge=0.0, description="First backoff delay in seconds, doubled per retry")


def resolve_api_key(env_var: Optional[str]) -> Optional[str]:
    """
    Read a credential from the environment.

    Args:
        env_var: Variable name, or None for endpoints that need no credential

    Raises:
        AuthError: The variable is named but not set
    """
    if env_var is None:
        return None
    value = os.environ.get(env_var)
    if not value:
        raise AuthError(f"credential environment variable {env_var} is not set", status_code=401)
    return value


def auth_headers(api_key: Optional[str]) -> Dict[str, str]:
    return {"Authorization": f"Bearer {api_key}"} if api_key else {}


def post_json(
    client: httpx.Client,
    url: str,
    payload: Dict[str, Any],
    *,
    headers: Optional[Dict[str, str]] = None,
    policy: Optional[RetryPolicy] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> Tuple[Dict[str, Any], int]:
    """
    POST ``payload`` as JSON and decode the JSON response.

    Transport failures, timeouts and 5xx answers are retried with exponential
    backoff; 4xx answers are never retried.

    Returns:
        (response body, number of attempts made)

    Raises:
        AuthError: 401/403
        EndpointStatusError: Other non-success status
        EndpointTimeoutError: Every attempt timed out
        TransportError: Connection-level failure on every attempt
        MalformedResponseError: Body is not a JSON object
    """
    policy = policy or RetryPolicy()
    attempts = policy.max_retries + 1
    last_error: Optional[NetworkError] = None

    for attempt in range(1, attempts + 1):
        try:
            response = client.post(url, json=payload, headers=headers or {})
        except httpx.TimeoutException as e:
            last_error = EndpointTimeoutError(f"POST {url} timed out: {e}")
        except httpx.TransportError as e:
            last_error = TransportError(f"POST {url} failed: {e}")
        else:
            status = response.status_code
            if status in (401, 403):
                raise AuthError(f"POST {url} rejected credentials ({status})", status_code=status)
            if 400 <= status < 500:
                raise EndpointStatusError(f"POST {url} returned {status}: {response.text[:200]}", status_code=status)
            if status >= 500:
                last_error = EndpointStatusError(f"POST {url} returned {status}", status_code=status)
            else:
                try:
                    body = response.json()
                except ValueError as e:
                    raise MalformedResponseError(f"POST {url} returned invalid JSON: {e}") from e
                if not isinstance(body, dict):
                    raise MalformedResponseError(f"POST {url} returned {type(body).__name__}, expected an object")
                return body, attempt

        if attempt < attempts:
            delay = policy.backoff_base * (2 ** (attempt - 1))
            logger.warning("%s (attempt %d/%d), retrying in %.2fs", last_error, attempt, attempts, delay)
            sleep(delay)

    assert last_error is not None
    raise last_error
