"""
Sample Publisher
----------------
Streams every EnergySample of a running evolution as JSON to an MQTT broker,
topic  <stream topic>/<run name>, e.g.  plab/samples/p4_algebraic

Enabled by the optional "stream" block of an experiment config:

    "stream": {"broker": "...", "port": 8883, "tls": true,
               "username": "...", "password": "...", "topic": "plab/samples"}
"""

import json
import logging
import ssl

import paho.mqtt.client as mqtt

logger = logging.getLogger(__name__)

# ── Configuration ─────────────────────────────────────────────────────────────
DEFAULT_PORT = 8883
DEFAULT_TOPIC = "plab/samples"
KEEPALIVE = 60


def build_mqtt_client(stream):
    client = mqtt.Client(mqtt.CallbackAPIVersion.VERSION2, protocol=mqtt.MQTTv5)
    if stream.get("tls", True):
        client.tls_set(cert_reqs=ssl.CERT_REQUIRED, tls_version=ssl.PROTOCOL_TLS)
    if stream.get("username"):
        client.username_pw_set(stream["username"], stream.get("password"))

    def on_connect(c, userdata, flags, rc, props):
        if rc == 0:
            logger.info("✅ MQTT connected")
        else:
            logger.error("❌ MQTT connection failed: rc=%s", rc)

    def on_disconnect(c, userdata, flags, rc, props):
        if rc != 0:
            logger.warning("⚠️  MQTT disconnected unexpectedly: rc=%s", rc)

    client.on_connect = on_connect
    client.on_disconnect = on_disconnect
    return client


class SamplePublisher:
    """Callable sample sink: publish(sample) sends one JSON message with qos=1."""

    def __init__(self, stream, run_name, client=None):
        if not stream.get("broker"):
            raise ValueError("stream block needs a broker")
        self.stream = stream
        self.topic = f"{stream.get('topic', DEFAULT_TOPIC)}/{run_name}"
        self.client = client or build_mqtt_client(stream)
        self.published = 0
        self.failed = 0
        self.connected = False

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()

    def connect(self):
        broker = self.stream["broker"]
        port = int(self.stream.get("port", DEFAULT_PORT))
        logger.info("🔌 Connecting to %s:%d…", broker, port)
        self.client.connect(broker, port, keepalive=KEEPALIVE)
        self.client.loop_start()
        self.connected = True

    def __call__(self, sample):
        payload = json.dumps({"type": "energy_sample", "topic": self.topic, "sample": sample.as_dict()})
        result = self.client.publish(self.topic, payload, qos=1)
        if result.rc == mqtt.MQTT_ERR_SUCCESS:
            self.published += 1
        else:
            self.failed += 1
            logger.warning("❌ Failed to publish sample t=%.6g, error code: %s", sample.t, result.rc)
        return result

    def close(self):
        if not self.connected:
            return
        self.connected = False
        self.client.loop_stop()
        self.client.disconnect()
        logger.info("✅ Stream closed: %d published, %d failed", self.published, self.failed)
