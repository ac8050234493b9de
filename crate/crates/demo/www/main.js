import init, { Shape, Session, chamfer } from "./pkg/pcdnet_demo.js";

const CATEGORIES = ["sphere", "box", "cylinder", "capsule", "torus"];
const $ = (id) => document.getElementById(id);

function drawImage(canvas, pixels, size) {
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(size, size);
  pixels.forEach((p, i) => {
    const v = 255 - Math.round(p * 255);
    img.data.set([v, v, v, 255], 4 * i);
  });
  const tmp = new OffscreenCanvas(size, size);
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

// Orthographic view of several clouds, rotated about their common centroid.
class CloudView {
  constructor(canvas) {
    this.canvas = canvas;
    this.yaw = 0.6;
    this.pitch = 0.3;
    this.layers = [];
    let last = null;
    canvas.addEventListener("pointerdown", (e) => (last = [e.clientX, e.clientY]));
    window.addEventListener("pointerup", () => (last = null));
    canvas.addEventListener("pointermove", (e) => {
      if (!last) return;
      this.yaw += (e.clientX - last[0]) * 0.01;
      this.pitch += (e.clientY - last[1]) * 0.01;
      last = [e.clientX, e.clientY];
      this.draw();
    });
  }

  show(layers) {
    this.layers = layers;
    this.draw();
  }

  draw() {
    const { canvas, yaw, pitch } = this;
    const ctx = canvas.getContext("2d");
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const all = this.layers.flatMap((l) => Array.from(l.points));
    if (all.length === 0) return;
    const n = all.length / 3;
    const c = [0, 1, 2].map((k) => all.filter((_, i) => i % 3 === k).reduce((a, b) => a + b, 0) / n);
    let r = 1e-9;
    for (let i = 0; i < all.length; i += 3) {
      r = Math.max(r, Math.hypot(all[i] - c[0], all[i + 1] - c[1], all[i + 2] - c[2]));
    }
    const s = (0.45 * canvas.width) / r;
    const [cy, sy, cp, sp] = [Math.cos(yaw), Math.sin(yaw), Math.cos(pitch), Math.sin(pitch)];
    for (const { points, color } of this.layers) {
      ctx.fillStyle = color;
      for (let i = 0; i < points.length; i += 3) {
        const x = points[i] - c[0], y = points[i + 1] - c[1], z = points[i + 2] - c[2];
        const x1 = cy * x + sy * z, z1 = -sy * x + cy * z;
        const y1 = cp * y - sp * z1;
        ctx.fillRect(canvas.width / 2 + s * x1 - 1, canvas.height / 2 + s * y1 - 1, 2, 2);
      }
    }
  }
}

await init();

for (const id of ["cat", "catA", "catB"]) {
  $(id).innerHTML = CATEGORIES.map((c) => `<option>${c}</option>`).join("");
}
$("catB").value = "torus";

const gtView = new CloudView($("gt"));
const pairView = new CloudView($("pair"));
const predView = new CloudView($("pred"));

$("render").onclick = () => {
  const shape = new Shape($("cat").value, BigInt($("seed").value), 48, 1024);
  drawImage($("sil"), shape.silhouette(), shape.size);
  gtView.show([{ points: shape.cloud(), color: "#333" }]);
  shape.free();
};

$("compare").onclick = () => {
  const a = new Shape($("catA").value, 1n, 16, 1024);
  const b = new Shape($("catB").value, 2n, 16, 1024);
  const [pa, pb] = [a.cloud(), b.cloud()];
  $("cd").value = chamfer(pa, pb, $("grid").checked).toFixed(5);
  pairView.show([
    { points: pa, color: "#1565c0" },
    { points: pb, color: "#c62828" },
  ]);
  a.free();
  b.free();
};

let session = null;

function showPrediction() {
  const i = Number($("idx").value) % session.test_count;
  drawImage($("img"), session.test_image(i), 32);
  predView.show([
    { points: session.test_cloud(i), color: "#aaa" },
    { points: session.predict(i), color: "#c62828" },
  ]);
}

$("start").onclick = () => {
  session?.free();
  session = new Session(0n);
  $("train").disabled = false;
  $("steps").value = 0;
  $("loss").value = "-";
  showPrediction();
};

$("train").onclick = () => {
  $("loss").value = session.step(10).toFixed(5);
  $("steps").value = session.steps;
  showPrediction();
};

$("idx").onchange = () => session && showPrediction();

$("render").click();
$("compare").click();
