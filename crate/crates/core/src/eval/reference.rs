// Published ablation grid: three manipulation tasks, six methods, success (%)
// and reward, observation probability 0.5 to 1.0 in steps of 0.05, followed
// by the relative degradation table derived from it (percent, p = 1.0 omitted).

use super::Metric;

pub struct ReferenceRow {
    pub task: &'static str,
    pub method: &'static str,
    pub metric: Metric,
    pub values: [f64; 11],
    pub degradation: [f64; 10],
}

pub const REFERENCE_P: [f64; 11] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0];

#[rustfmt::skip]
pub const REFERENCE_ROWS: [ReferenceRow; 36] = [
    ReferenceRow {
        task: "Plate-Slide", method: "membot-ssm", metric: Metric::Success,
        values: [9.0, 7.0, 9.0, 21.0, 24.0, 41.0, 45.0, 70.0, 76.0, 84.0, 95.0],
        degradation: [-90.5, -92.6, -90.5, -77.9, -74.7, -56.8, -52.6, -26.3, -20.0, -11.6],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "membot-ssm", metric: Metric::Reward,
        values: [1.38, 1.06, 1.95, 3.51, 4.89, 7.66, 9.54, 15.33, 17.3, 19.8, 24.33],
        degradation: [-94.3, -95.6, -92.0, -85.6, -79.9, -68.5, -60.8, -37.0, -28.9, -18.6],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "membot-lstm-full", metric: Metric::Success,
        values: [4.6, 4.3, 9.2, 11.9, 16.7, 18.4, 27.3, 35.8, 39.1, 48.3, 51.2],
        degradation: [-91.0, -91.6, -82.0, -76.8, -67.4, -64.1, -46.7, -30.1, -23.6, -5.7],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "membot-lstm-full", metric: Metric::Reward,
        values: [1.0, 1.0, 2.0, 2.6, 3.9, 4.1, 6.3, 8.1, 8.7, 10.5, 11.1],
        degradation: [-91.0, -91.0, -82.0, -76.6, -64.9, -63.1, -43.2, -27.0, -21.6, -5.4],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "membot-lstm-partial10", metric: Metric::Success,
        values: [4.7, 4.2, 9.1, 11.8, 16.6, 19.3, 27.2, 35.7, 39.2, 48.1, 51.0],
        degradation: [-90.8, -91.8, -82.2, -76.9, -67.5, -62.2, -46.7, -30.0, -23.1, -5.7],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "membot-lstm-partial10", metric: Metric::Reward,
        values: [1.0, 1.0, 1.9, 2.5, 3.8, 4.4, 6.2, 8.0, 8.8, 10.4, 11.0],
        degradation: [-90.9, -90.9, -82.7, -77.3, -65.5, -60.0, -43.6, -27.3, -20.0, -5.5],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "membot-lstm-norecon", metric: Metric::Success,
        values: [4.2, 4.8, 8.7, 11.4, 16.1, 18.7, 26.5, 34.9, 38.4, 47.2, 50.3],
        degradation: [-91.6, -90.5, -82.7, -77.3, -68.0, -62.8, -47.3, -30.6, -23.7, -6.2],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "membot-lstm-norecon", metric: Metric::Reward,
        values: [0.9, 1.1, 1.8, 2.4, 3.6, 4.1, 5.9, 7.8, 8.4, 10.2, 10.8],
        degradation: [-91.7, -89.8, -83.3, -77.8, -66.7, -62.0, -45.4, -27.8, -22.2, -5.6],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "memoryless-mlp-encoder", metric: Metric::Success,
        values: [1.1, 2.8, 6.7, 8.9, 13.8, 18.6, 24.2, 31.9, 35.7, 45.1, 47.3],
        degradation: [-97.7, -94.1, -85.8, -81.2, -70.8, -60.7, -48.8, -32.6, -24.5, -4.6],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "memoryless-mlp-encoder", metric: Metric::Reward,
        values: [0.3, 0.4, 1.3, 1.7, 2.5, 3.6, 5.0, 7.0, 8.1, 10.0, 10.4],
        degradation: [-97.1, -96.2, -87.5, -83.7, -76.0, -65.4, -51.9, -32.7, -22.1, -3.8],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "memoryless", metric: Metric::Success,
        values: [1.0, 2.7, 6.5, 8.6, 13.4, 18.2, 23.6, 31.3, 35.1, 44.3, 46.2],
        degradation: [-97.8, -94.2, -85.9, -81.4, -71.0, -60.6, -48.9, -32.3, -24.0, -4.1],
    },
    ReferenceRow {
        task: "Plate-Slide", method: "memoryless", metric: Metric::Reward,
        values: [0.3, 0.4, 1.2, 1.6, 2.3, 3.4, 4.7, 6.8, 7.9, 9.7, 10.1],
        degradation: [-97.0, -96.0, -88.1, -84.2, -77.2, -66.3, -53.5, -32.7, -21.8, -4.0],
    },
    ReferenceRow {
        task: "Handle-Press", method: "membot-ssm", metric: Metric::Success,
        values: [7.0, 8.0, 15.0, 28.0, 34.0, 54.0, 62.0, 76.0, 74.0, 75.0, 82.0],
        degradation: [-91.5, -90.2, -81.7, -65.9, -58.5, -34.1, -24.4, -7.3, -9.8, -8.5],
    },
    ReferenceRow {
        task: "Handle-Press", method: "membot-ssm", metric: Metric::Reward,
        values: [1.95, 1.67, 4.48, 7.8, 9.4, 15.07, 18.62, 24.15, 22.8, 24.94, 28.36],
        degradation: [-93.1, -94.1, -84.2, -72.5, -66.9, -46.9, -34.3, -14.9, -19.6, -12.1],
    },
    ReferenceRow {
        task: "Handle-Press", method: "membot-lstm-full", metric: Metric::Success,
        values: [3.2, 8.4, 8.3, 12.7, 18.5, 25.2, 28.1, 31.8, 40.2, 45.3, 47.9],
        degradation: [-93.3, -82.5, -82.7, -73.5, -61.4, -47.4, -41.3, -33.6, -16.1, -5.4],
    },
    ReferenceRow {
        task: "Handle-Press", method: "membot-lstm-full", metric: Metric::Reward,
        values: [1.0, 2.8, 3.1, 4.4, 6.5, 8.2, 9.1, 10.4, 12.7, 14.6, 14.8],
        degradation: [-93.2, -81.1, -79.1, -70.3, -56.1, -44.6, -38.5, -29.7, -14.2, -1.4],
    },
    ReferenceRow {
        task: "Handle-Press", method: "membot-lstm-partial10", metric: Metric::Success,
        values: [3.1, 8.5, 8.4, 12.3, 18.3, 25.0, 27.9, 32.7, 40.0, 45.1, 47.8],
        degradation: [-93.5, -82.2, -82.4, -74.3, -61.7, -47.7, -41.6, -31.5, -16.3, -5.6],
    },
    ReferenceRow {
        task: "Handle-Press", method: "membot-lstm-partial10", metric: Metric::Reward,
        values: [1.0, 2.9, 3.2, 4.1, 6.4, 8.1, 8.9, 10.8, 12.6, 14.5, 14.8],
        degradation: [-93.2, -80.4, -78.4, -72.3, -56.8, -45.3, -39.9, -27.0, -14.9, -2.0],
    },
    ReferenceRow {
        task: "Handle-Press", method: "membot-lstm-norecon", metric: Metric::Success,
        values: [2.9, 7.8, 7.7, 12.0, 17.8, 24.3, 27.2, 32.1, 39.2, 44.2, 47.0],
        degradation: [-93.8, -83.4, -83.6, -74.5, -62.1, -48.3, -42.1, -31.7, -16.6, -6.0],
    },
    ReferenceRow {
        task: "Handle-Press", method: "membot-lstm-norecon", metric: Metric::Reward,
        values: [0.9, 2.6, 2.8, 4.0, 6.0, 7.7, 8.5, 10.5, 12.2, 14.1, 14.6],
        degradation: [-93.8, -82.2, -80.8, -72.6, -58.9, -47.3, -41.8, -28.1, -16.4, -3.4],
    },
    ReferenceRow {
        task: "Handle-Press", method: "memoryless-mlp-encoder", metric: Metric::Success,
        values: [1.1, 1.8, 4.7, 7.8, 11.9, 17.6, 21.1, 29.8, 29.7, 36.9, 40.1],
        degradation: [-97.3, -95.5, -88.3, -80.5, -70.3, -56.1, -47.4, -25.7, -25.9, -8.0],
    },
    ReferenceRow {
        task: "Handle-Press", method: "memoryless-mlp-encoder", metric: Metric::Reward,
        values: [0.1, 0.5, 1.2, 2.0, 3.1, 5.0, 5.7, 8.9, 9.0, 11.9, 14.1],
        degradation: [-99.3, -96.5, -91.5, -85.8, -78.0, -64.5, -59.6, -36.9, -36.2, -15.6],
    },
    ReferenceRow {
        task: "Handle-Press", method: "memoryless", metric: Metric::Success,
        values: [1.0, 1.7, 4.6, 7.4, 11.3, 17.2, 20.4, 29.1, 29.2, 36.1, 39.3],
        degradation: [-97.5, -95.7, -88.3, -81.2, -71.2, -56.2, -48.1, -25.9, -25.7, -8.1],
    },
    ReferenceRow {
        task: "Handle-Press", method: "memoryless", metric: Metric::Reward,
        values: [0.1, 0.5, 1.1, 1.9, 2.9, 4.7, 5.4, 8.6, 8.7, 11.6, 13.8],
        degradation: [-99.3, -96.4, -92.0, -86.2, -79.0, -65.9, -60.9, -37.7, -37.0, -15.9],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "membot-ssm", metric: Metric::Success,
        values: [62.0, 53.0, 67.0, 62.0, 62.0, 61.0, 58.0, 61.0, 56.0, 56.0, 54.0],
        degradation: [14.8, -1.9, 24.1, 14.8, 14.8, 13.0, 7.4, 13.0, 3.7, 3.7],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "membot-ssm", metric: Metric::Reward,
        values: [15.38, 13.72, 19.54, 17.69, 18.37, 18.43, 18.2, 19.95, 18.72, 19.56, 18.21],
        degradation: [-15.5, -24.7, 7.3, -2.9, 0.9, 1.2, 0.0, 9.6, 2.8, 7.4],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "membot-lstm-full", metric: Metric::Success,
        values: [65.8, 68.7, 67.3, 63.9, 68.6, 72.1, 71.5, 76.3, 76.9, 74.3, 72.1],
        degradation: [-8.7, -4.7, -6.7, -11.4, -4.9, 0.0, -0.8, 5.8, 6.7, 3.1],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "membot-lstm-full", metric: Metric::Reward,
        values: [23.4, 24.3, 24.6, 22.3, 24.8, 26.1, 26.7, 27.8, 28.4, 28.3, 26.2],
        degradation: [-10.7, -7.3, -6.1, -14.9, -5.3, -0.4, 1.9, 6.1, 8.4, 8.0],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "membot-lstm-partial10", metric: Metric::Success,
        values: [65.1, 68.9, 67.0, 64.2, 68.4, 71.8, 71.6, 75.8, 76.5, 74.0, 72.0],
        degradation: [-9.6, -4.3, -6.9, -10.8, -5.0, -0.3, -0.6, 5.3, 6.3, 2.8],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "membot-lstm-partial10", metric: Metric::Reward,
        values: [23.3, 24.5, 24.5, 22.6, 24.8, 26.1, 26.8, 27.8, 28.4, 28.3, 26.3],
        degradation: [-11.4, -6.8, -6.8, -14.1, -5.7, -0.8, 1.9, 5.7, 8.0, 7.6],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "membot-lstm-norecon", metric: Metric::Success,
        values: [64.2, 67.4, 66.1, 63.7, 67.6, 70.8, 70.6, 74.9, 75.6, 72.9, 71.4],
        degradation: [-10.1, -5.6, -7.4, -10.8, -5.3, -0.8, -1.1, 4.9, 5.9, 2.1],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "membot-lstm-norecon", metric: Metric::Reward,
        values: [22.7, 23.6, 23.9, 22.1, 24.1, 25.4, 26.0, 27.1, 27.7, 27.6, 25.9],
        degradation: [-12.4, -8.9, -7.7, -14.7, -7.0, -1.9, 0.4, 4.6, 6.9, 6.6],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "memoryless-mlp-encoder", metric: Metric::Success,
        values: [37.8, 50.5, 42.4, 49.2, 48.7, 48.0, 56.1, 51.5, 54.0, 56.6, 64.4],
        degradation: [-41.3, -21.6, -34.2, -23.6, -24.4, -25.5, -12.9, -20.1, -16.1, -12.1],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "memoryless-mlp-encoder", metric: Metric::Reward,
        values: [10.0, 14.4, 11.6, 15.0, 14.9, 15.1, 17.8, 17.5, 17.6, 19.4, 22.9],
        degradation: [-56.3, -37.1, -49.3, -34.5, -34.9, -34.1, -22.3, -23.6, -23.1, -15.3],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "memoryless", metric: Metric::Success,
        values: [37.3, 49.4, 42.3, 48.4, 47.4, 47.5, 54.5, 50.5, 53.4, 55.5, 63.5],
        degradation: [-41.3, -22.2, -33.4, -23.8, -25.4, -25.2, -14.2, -20.5, -15.9, -12.6],
    },
    ReferenceRow {
        task: "Drawer-Close", method: "memoryless", metric: Metric::Reward,
        values: [9.8, 14.1, 11.5, 14.8, 14.5, 15.0, 17.3, 17.2, 17.4, 19.0, 22.6],
        degradation: [-56.6, -37.6, -49.1, -34.5, -35.8, -33.6, -23.5, -23.9, -23.0, -15.9],
    },
];
