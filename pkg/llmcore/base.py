import os

import requests

from constants import LLM_TIMEOUT
from errors import ConfigurationError, TransientLLMError

TRANSIENT_STATUS = {408, 409, 429, 500, 502, 503, 504}


class BaseLLMRestClient:
    """
    Handles HTTP session, bearer authentication, and JSON POST for an
    OpenAI-compatible endpoint. The key is read from an environment variable;
    it is never part of a config file.
    """

    def __init__(
        self,
        endpoint: str,
        api_key_env: str,
        timeout: float = LLM_TIMEOUT,
        verify_ssl: bool = True
    ):
        self.base_url = endpoint.rstrip("/")
        self.timeout = timeout
        self.verify = verify_ssl
        token = self._read_token(api_key_env)
        self.session = requests.Session()
        self.session.headers.update({
            "Authorization": f"Bearer {token}",
            "Accept": "application/json",
            "Content-Type": "application/json",
        })

    @staticmethod
    def _read_token(api_key_env: str) -> str:
        token = os.environ.get(api_key_env, "")
        if not token:
            raise ConfigurationError(f"environment variable {api_key_env} is not set")
        return token

    def _post(self, path: str, payload: dict) -> dict:
        """
        POST against `{self.base_url}{path}` → parsed JSON.
        Timeouts, connection failures, 429 and 5xx raise TransientLLMError;
        other HTTP errors raise requests.HTTPError.
        """
        url = f"{self.base_url}{path}"
        try:
            resp = self.session.post(url, json=payload, timeout=self.timeout, verify=self.verify)
        except (requests.Timeout, requests.ConnectionError) as e:
            raise TransientLLMError(f"POST {path} failed: {e}") from e
        if resp.status_code in TRANSIENT_STATUS:
            raise TransientLLMError(f"POST {path} returned HTTP {resp.status_code}")
        resp.raise_for_status()
        return resp.json()
