#!/usr/bin/env python3
"""
Walk the Stroke Patch Stylizer API end to end: patches -> train -> style.

Needs a running API plus workers for the patches, training and styling queues.
"""

import argparse
import time
from pathlib import Path

import requests

API_BASE_URL = "http://localhost:8000"


def check_health():
    print("🏥 Checking health endpoint...")
    response = requests.get(f"{API_BASE_URL}/health", timeout=10)
    if response.status_code == 200:
        print("✅ Health check passed")
        return True
    print(f"❌ Health check failed: {response.status_code}")
    return False


def poll_result(task_id: str, max_wait: int = 600, interval: float = 5.0):
    """Poll for a task result; returns the task's result dict or None."""
    print(f"⏳ Polling for result of task {task_id}...")

    start_time = time.time()
    while time.time() - start_time < max_wait:
        response = requests.get(f"{API_BASE_URL}/result/{task_id}", timeout=10)
        if response.status_code != 200:
            print(f"❌ Failed to get result: {response.status_code}")
            return None

        result = response.json()
        status = result['status']
        if status == 'completed':
            print(f"✅ Task completed in {result['result'].get('total_time', 'N/A')}s")
            return result['result']
        if status in ('failed', 'error'):
            error = result.get('error') or result.get('result', {}).get('error', 'Unknown error')
            print(f"❌ Task failed: {error}")
            return None
        print(f"⏳ Status: {status} - waiting...")
        time.sleep(interval)

    print(f"⏰ Timeout waiting for result after {max_wait}s")
    return None


def generate(name: str, style: str, count: int, size: int, seed: int):
    print(f"🎨 Generating {count} {style} patches as {name!r}...")
    response = requests.post(f"{API_BASE_URL}/patches", json={
        "name": name, "style": style, "count": count, "width": size, "height": size, "seed": seed,
    }, timeout=10)
    if response.status_code != 200:
        print(f"❌ Patch request failed: {response.status_code} - {response.text}")
        return None
    return poll_result(response.json()['task_id'])


def train(patch_set: str, model_name: str, epochs: int):
    print(f"🧠 Training {model_name!r} on {patch_set!r} for {epochs} epochs...")
    response = requests.post(f"{API_BASE_URL}/train", json={
        "patch_set": patch_set, "model_name": model_name, "epochs": epochs,
        "depth": 2, "base_channels": 16, "blur_radius": 2.5,
    }, timeout=10)
    if response.status_code != 200:
        print(f"❌ Train request failed: {response.status_code} - {response.text}")
        return None
    return poll_result(response.json()['task_id'], max_wait=3600)


def style(image_path: Path, model_name: str, scale: float, out: Path):
    print(f"🖌️  Stylizing {image_path} with {model_name!r} at r={scale}...")
    with open(image_path, 'rb') as f:
        response = requests.post(f"{API_BASE_URL}/style", files={'file': f},
                                 data={'model': model_name, 'scale': str(scale)}, timeout=30)
    if response.status_code != 200:
        print(f"❌ Style request failed: {response.status_code} - {response.text}")
        return False
    task_id = response.json()['task_id']
    if poll_result(task_id) is None:
        return False

    download = requests.get(f"{API_BASE_URL}/outputs/{task_id}", timeout=30)
    if download.status_code != 200:
        print(f"❌ Could not download output: {download.status_code}")
        return False
    out.write_bytes(download.content)
    print(f"🖼️  Saved {out}")
    return True


def main():
    parser = argparse.ArgumentParser(description="Walk the Stroke Patch Stylizer API end to end")
    parser.add_argument("image", type=Path, help="PNG to stylize")
    parser.add_argument("--url", type=str, default="http://localhost:8000", help="API base URL")
    parser.add_argument("--style", default="wet_brush")
    parser.add_argument("--count", type=int, default=64)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--scale", type=float, default=0.5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("stylized.png"))
    args = parser.parse_args()

    global API_BASE_URL
    API_BASE_URL = args.url

    print("🧪 Stroke Patch Stylizer API walkthrough")
    print(f"🌐 API URL: {API_BASE_URL}")
    print("=" * 50)

    if not check_health():
        raise SystemExit(1)

    name = f"{args.style}_walkthrough"
    ok = (generate(name, args.style, args.count, args.size, args.seed) is not None
          and train(name, name, args.epochs) is not None
          and style(args.image, name, args.scale, args.out))
    print("✅ Walkthrough completed!" if ok else "💥 Walkthrough failed")
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
